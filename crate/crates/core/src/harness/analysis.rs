use serde::{Deserialize, Serialize};

use super::metrics::RunMetrics;
use crate::error::{Error, Result};

/// Most- and least-picked ids among those accepted by `filter`, ties broken
/// by ascending id.
pub fn rank_pick_frequencies<F>(
    metrics: &RunMetrics,
    filter: F,
    top_n: usize,
) -> Result<(Vec<u64>, Vec<u64>)>
where
    F: Fn(u64) -> bool,
{
    let mut pop: Vec<(u64, u64)> = metrics
        .pick_counts
        .iter()
        .filter(|(&id, _)| filter(id))
        .map(|(&id, &c)| (id, c))
        .collect();
    if top_n > pop.len() {
        return Err(Error::config(format!(
            "top_n {top_n} exceeds the {} examples that pass the filter",
            pop.len()
        )));
    }
    pop.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let most = pop[..top_n].iter().map(|p| p.0).collect();
    pop.sort_by(|a, b| a.1.cmp(&b.1).then(a.0.cmp(&b.0)));
    let least = pop[..top_n].iter().map(|p| p.0).collect();
    Ok((most, least))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregatePoint {
    /// Backprops for evaluation points, iteration for batch series.
    pub x: u64,
    pub mean: f64,
    /// Sample standard deviation; zero for a single run.
    pub std: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregatedMetrics {
    pub runs: usize,
    pub test_error: Vec<AggregatePoint>,
    pub corrupted_fraction: Vec<AggregatePoint>,
}

impl AggregatedMetrics {
    pub fn eval_curve(&self) -> Vec<(u64, f64)> {
        self.test_error.iter().map(|p| (p.x, p.mean)).collect()
    }

    pub fn best_test_error(&self) -> f64 {
        self.test_error
            .iter()
            .map(|p| p.mean)
            .fold(f64::INFINITY, f64::min)
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Pointwise mean/std over the common prefix of the series. `x` values must
/// agree at every shared position.
fn aggregate_series(series: &[Vec<(u64, f64)>], what: &str) -> Result<Vec<AggregatePoint>> {
    let len = series.iter().map(Vec::len).min().unwrap_or(0);
    (0..len)
        .map(|i| {
            let x = series[0][i].0;
            if let Some(s) = series.iter().find(|s| s[i].0 != x) {
                return Err(Error::Aggregation(format!(
                    "{what} schedules disagree at position {i}: {x} vs {}",
                    s[i].0
                )));
            }
            let values: Vec<f64> = series.iter().map(|s| s[i].1).collect();
            let (mean, std) = mean_std(&values);
            Ok(AggregatePoint { x, mean, std })
        })
        .collect()
}

/// Seed average. Runs may differ in length (a selective strategy can emit a
/// slightly different number of batches per seed); the common prefix of the
/// evaluation schedule is averaged.
pub fn aggregate_seeds(runs: &[RunMetrics]) -> Result<AggregatedMetrics> {
    if runs.is_empty() {
        return Err(Error::Aggregation("no runs to aggregate".into()));
    }
    let evals: Vec<_> = runs.iter().map(RunMetrics::eval_curve).collect();
    let fracs: Vec<_> = runs.iter().map(RunMetrics::corrupted_fraction_series).collect();
    Ok(AggregatedMetrics {
        runs: runs.len(),
        test_error: aggregate_series(&evals, "evaluation")?,
        corrupted_fraction: aggregate_series(&fracs, "batch")?,
    })
}
