use std::collections::VecDeque;

/// Exact sliding window over the last `capacity` scores with rank queries.
///
/// Scores are kept twice: in arrival order for eviction and in a sorted
/// vector for `O(log H)` CDF lookups.
#[derive(Clone, Debug)]
pub struct ScoreHistogram {
    capacity: usize,
    window: VecDeque<f64>,
    sorted: Vec<f64>,
}

impl ScoreHistogram {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "histogram capacity must be positive");
        ScoreHistogram {
            capacity,
            window: VecDeque::with_capacity(capacity),
            sorted: Vec::with_capacity(capacity),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.window.len()
    }

    pub fn is_empty(&self) -> bool {
        self.window.is_empty()
    }

    /// Window contents, oldest first.
    pub fn window(&self) -> impl Iterator<Item = f64> + '_ {
        self.window.iter().copied()
    }

    pub fn insert(&mut self, score: f64) {
        if self.window.len() == self.capacity {
            let old = self.window.pop_front().unwrap();
            let pos = self.sorted.partition_point(|s| s.total_cmp(&old).is_lt());
            debug_assert_eq!(self.sorted[pos].to_bits(), old.to_bits());
            self.sorted.remove(pos);
        }
        self.window.push_back(score);
        let pos = self.sorted.partition_point(|s| s.total_cmp(&score).is_le());
        self.sorted.insert(pos, score);
    }

    /// Fraction of window entries `<= score`, or `None` while empty.
    pub fn cdf(&self, score: f64) -> Option<f64> {
        if self.is_empty() {
            return None;
        }
        let at_or_below = self.sorted.partition_point(|s| s.total_cmp(&score).is_le());
        Some(at_or_below as f64 / self.sorted.len() as f64)
    }
}

/// `cdf(score)^beta`, or `None` on an empty histogram (the caller selects
/// unconditionally).
pub fn selection_probability(score: f64, hist: &ScoreHistogram, beta: f64) -> Option<f64> {
    hist.cdf(score).map(|c| c.powf(beta))
}

/// Long-run SB acceptance rate for i.i.d. continuous scores: `1 / (beta + 1)`.
pub fn expected_selection_fraction(beta: f64) -> f64 {
    1.0 / (beta + 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_cdf(window: &[f64], s: f64) -> f64 {
        window.iter().filter(|&&w| w <= s).count() as f64 / window.len() as f64
    }

    #[test]
    fn rank_count_example() {
        let mut h = ScoreHistogram::new(8);
        for s in [1.0, 2.0, 3.0, 4.0] {
            h.insert(s);
        }
        assert_eq!(selection_probability(2.0, &h, 2.0), Some(0.25));
        assert_eq!(selection_probability(4.0, &h, 1.0), Some(1.0));
        assert_eq!(selection_probability(9.0, &h, 1.0), Some(1.0));
        assert_eq!(selection_probability(0.5, &h, 0.0), Some(1.0));
        assert_eq!(selection_probability(0.5, &h, 1.0), Some(0.0));
    }

    #[test]
    fn empty_signals_warmup() {
        let h = ScoreHistogram::new(4);
        assert_eq!(selection_probability(1.0, &h, 1.0), None);
    }

    #[test]
    fn evicts_oldest() {
        let mut h = ScoreHistogram::new(3);
        for s in [5.0, 1.0, 2.0, 3.0] {
            h.insert(s);
        }
        assert_eq!(h.window().collect::<Vec<_>>(), vec![1.0, 2.0, 3.0]);
        assert_eq!(h.cdf(4.0), Some(1.0));
    }

    #[test]
    fn selectivity_constants() {
        assert_eq!(expected_selection_fraction(0.0), 1.0);
        assert_eq!(expected_selection_fraction(1.0), 0.5);
        assert_eq!(expected_selection_fraction(2.0), 1.0 / 3.0);
    }

    proptest! {
        #[test]
        fn matches_brute_force(
            cap in 1usize..40,
            scores in prop::collection::vec(0u8..20, 1..200),
            probe in 0u8..22,
        ) {
            let mut h = ScoreHistogram::new(cap);
            let mut all = Vec::new();
            for s in scores {
                h.insert(f64::from(s));
                all.push(f64::from(s));
                let start = all.len().saturating_sub(cap);
                let window = &all[start..];
                prop_assert!(h.len() <= cap);
                prop_assert_eq!(h.cdf(f64::from(probe)), Some(brute_cdf(window, f64::from(probe))));
            }
        }

        #[test]
        fn monotone_in_score(
            scores in prop::collection::vec(0.0f64..10.0, 1..64),
            a in 0.0f64..10.0,
            b in 0.0f64..10.0,
            beta in 0.01f64..4.0,
        ) {
            let mut h = ScoreHistogram::new(32);
            for s in scores { h.insert(s); }
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(
                selection_probability(lo, &h, beta).unwrap()
                    <= selection_probability(hi, &h, beta).unwrap()
            );
        }
    }
}
