//! Training runs, the backprops-to-threshold speedup metric, and the
//! corrupted-fraction and pick-count diagnostics.

mod analysis;
mod metrics;
mod speedup;
mod train;

pub use analysis::{aggregate_seeds, rank_pick_frequencies, AggregatePoint, AggregatedMetrics};
pub use metrics::{BatchRecord, EvalPoint, RunMetrics};
pub use speedup::{compute_speedup, speedup_from_curves, SpeedupReport};
pub use train::{run_training, test_error, train, train_observed, TrainingOutcome};

/// Threshold multiplier on the baseline's best error.
pub const DEFAULT_SLACK: f64 = 1.2;
