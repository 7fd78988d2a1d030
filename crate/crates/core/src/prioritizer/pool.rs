use rand::seq::index;
use rand::Rng;

/// Pre-sampling pool for variance-reduction importance sampling.
///
/// Once `capacity` scored candidates have arrived, a batch is drawn from the
/// pool and the pool is emptied. The draw is loss-proportional when the
/// gate statistic exceeds `gate_threshold`, uniform otherwise.
#[derive(Clone, Debug)]
pub struct SamplingPool {
    capacity: usize,
    gate_threshold: f64,
    entries: Vec<(u64, f64)>,
}

/// Outcome of one pool round.
#[derive(Clone, Debug, PartialEq)]
pub struct PoolDraw {
    pub ids: Vec<u64>,
    pub gate_on: bool,
    pub gate_statistic: f64,
}

impl SamplingPool {
    pub fn new(capacity: usize, gate_threshold: f64) -> Self {
        assert!(capacity > 0, "pool capacity must be positive");
        SamplingPool {
            capacity,
            gate_threshold,
            entries: Vec::with_capacity(capacity),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn gate_threshold(&self) -> f64 {
        self.gate_threshold
    }

    pub fn entries(&self) -> &[(u64, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.entries.len() >= self.capacity
    }

    pub fn push(&mut self, id: u64, loss: f64) {
        self.entries.push((id, loss));
    }

    /// `q_i = L_i / sum(L)`, or uniform when the losses sum to zero.
    pub fn sampling_distribution(&self) -> Vec<f64> {
        distribution(&self.entries)
    }

    /// `n * sum_i (q_i - 1/n)^2` for the current entries.
    pub fn gate_statistic(&self) -> f64 {
        gate_statistic(&self.entries)
    }

    /// Draws `batch_size` distinct ids and empties the pool.
    pub fn draw<R: Rng + ?Sized>(&mut self, batch_size: usize, rng: &mut R) -> PoolDraw {
        let g = self.gate_statistic();
        let gate_on = g > self.gate_threshold;
        let n = self.entries.len();
        let k = batch_size.min(n);
        let picked: Vec<usize> = if gate_on {
            weighted_without_replacement(&self.sampling_distribution(), k, rng)
        } else {
            index::sample(rng, n, k).into_vec()
        };
        let ids = picked.into_iter().map(|i| self.entries[i].0).collect();
        self.entries.clear();
        PoolDraw {
            ids,
            gate_on,
            gate_statistic: g,
        }
    }
}

fn distribution(entries: &[(u64, f64)]) -> Vec<f64> {
    let n = entries.len() as f64;
    let total: f64 = entries.iter().map(|e| e.1).sum();
    if total > 0.0 {
        entries.iter().map(|e| e.1 / total).collect()
    } else {
        vec![1.0 / n; entries.len()]
    }
}

/// Equals `var(L) / mean(L)^2`. Exactly zero for a constant or all-zero loss
/// vector, where the ratio form would pick up rounding noise.
fn gate_statistic(entries: &[(u64, f64)]) -> f64 {
    let Some(&(_, first)) = entries.first() else {
        return 0.0;
    };
    if entries.iter().all(|e| e.1 == first) {
        return 0.0;
    }
    let n = entries.len() as f64;
    let mean = entries.iter().map(|e| e.1).sum::<f64>() / n;
    if mean <= 0.0 {
        return 0.0;
    }
    entries.iter().map(|e| (e.1 - mean).powi(2)).sum::<f64>() / (n * mean * mean)
}

/// Sequential draws, each proportional to the weights of the entries not yet
/// taken. Falls back to uniform over the remainder once its weight is zero.
fn weighted_without_replacement<R: Rng + ?Sized>(
    weights: &[f64],
    k: usize,
    rng: &mut R,
) -> Vec<usize> {
    let mut remaining: Vec<usize> = (0..weights.len()).collect();
    let mut out = Vec::with_capacity(k);
    for _ in 0..k {
        let total: f64 = remaining.iter().map(|&i| weights[i]).sum();
        let pos = if total > 0.0 {
            let target = rng.gen::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = None;
            for (p, &i) in remaining.iter().enumerate() {
                acc += weights[i];
                if target < acc {
                    chosen = Some(p);
                    break;
                }
            }
            // rounding can leave target == acc at the very end
            chosen.unwrap_or_else(|| {
                remaining
                    .iter()
                    .rposition(|&i| weights[i] > 0.0)
                    .unwrap()
            })
        } else {
            rng.gen_range(0..remaining.len())
        };
        out.push(remaining.remove(pos));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn constant_losses_close_the_gate() {
        let mut p = SamplingPool::new(3, 0.0);
        for id in 0..3 {
            p.push(id, 0.3);
        }
        assert_eq!(p.gate_statistic(), 0.0);
        let d = p.draw(2, &mut rng::stream(0, "t"));
        assert!(!d.gate_on);
        assert_eq!(d.ids.len(), 2);
        assert!(p.is_empty());
    }

    #[test]
    fn zero_losses_are_uniform() {
        let mut p = SamplingPool::new(4, 0.0);
        for id in 0..4 {
            p.push(id, 0.0);
        }
        assert_eq!(p.sampling_distribution(), vec![0.25; 4]);
        assert!(!p.draw(2, &mut rng::stream(0, "t")).gate_on);
    }

    #[test]
    fn gate_statistic_matches_definition() {
        let mut p = SamplingPool::new(4, 0.0);
        for (id, l) in [(0, 1.0), (1, 2.0), (2, 3.0), (3, 6.0)] {
            p.push(id, l);
        }
        let q = p.sampling_distribution();
        let direct: f64 = 4.0 * q.iter().map(|qi| (qi - 0.25).powi(2)).sum::<f64>();
        assert!((p.gate_statistic() - direct).abs() < 1e-15);
    }

    #[test]
    fn threshold_keeps_gate_closed() {
        let mut p = SamplingPool::new(2, 10.0);
        p.push(0, 3.0);
        p.push(1, 1.0);
        assert!(!p.draw(1, &mut rng::stream(0, "t")).gate_on);
    }

    #[test]
    fn three_to_one_draw_frequencies() {
        let mut r = rng::stream(3, "t");
        let trials = 40_000;
        let mut a = 0;
        for _ in 0..trials {
            let mut p = SamplingPool::new(2, 0.0);
            p.push(10, 3.0);
            p.push(11, 1.0);
            let d = p.draw(1, &mut r);
            assert!(d.gate_on);
            if d.ids == [10] {
                a += 1;
            }
        }
        let freq = a as f64 / trials as f64;
        assert!((freq - 0.75).abs() < 0.01, "{freq}");
    }

    #[test]
    fn draws_are_distinct_even_with_zero_weights() {
        let mut r = rng::stream(4, "t");
        for _ in 0..200 {
            let w = [0.0, 5.0, 0.0, 1.0, 0.0];
            let mut picked = weighted_without_replacement(&w, 4, &mut r);
            assert!(picked[..2].iter().all(|&i| i == 1 || i == 3));
            picked.sort_unstable();
            picked.dedup();
            assert_eq!(picked.len(), 4);
        }
    }
}
