use serde::{Deserialize, Serialize};

use super::Mlp;
use crate::dataset::Example;
use crate::error::{Error, Result};

/// Optimizer, schedule and architecture settings for one training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainerConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Multiplier applied at each drop point (0.2 = "drop by 80%").
    pub lr_drop_factor: f64,
    /// Fractions of total training progress at which the rate drops.
    pub lr_drop_points: Vec<f64>,
    pub batch_size: usize,
    pub total_epochs: usize,
    pub hidden_layers: Vec<usize>,
    pub seed: u64,
    /// Stop once this many examples have been back-propagated.
    pub max_backprops: Option<u64>,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        TrainerConfig {
            learning_rate: 0.1,
            momentum: 0.9,
            weight_decay: 0.0005,
            lr_drop_factor: 0.2,
            lr_drop_points: vec![0.6, 0.8],
            batch_size: 128,
            total_epochs: 20,
            hidden_layers: vec![128, 128],
            seed: 0,
            max_backprops: None,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, why: &str| Err(Error::config(format!("trainer.{field} {why}")));
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return bad("learning_rate", "must be non-negative");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum", "must lie in [0, 1)");
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return bad("weight_decay", "must be non-negative");
        }
        if !(self.lr_drop_factor > 0.0 && self.lr_drop_factor <= 1.0) {
            return bad("lr_drop_factor", "must lie in (0, 1]");
        }
        if self.lr_drop_points.iter().any(|p| !(*p > 0.0 && *p < 1.0))
            || self.lr_drop_points.windows(2).any(|w| w[0] >= w[1])
        {
            return bad("lr_drop_points", "must be strictly increasing within (0, 1)");
        }
        if self.batch_size == 0 {
            return bad("batch_size", "must be positive");
        }
        if self.total_epochs == 0 {
            return bad("total_epochs", "must be positive");
        }
        if self.hidden_layers.contains(&0) {
            return bad("hidden_layers", "must not contain zero widths");
        }
        Ok(())
    }

    /// `[D, hidden..., K]`.
    pub fn architecture(&self, input_dim: usize, num_classes: usize) -> Vec<usize> {
        std::iter::once(input_dim)
            .chain(self.hidden_layers.iter().copied())
            .chain(std::iter::once(num_classes))
            .collect()
    }
}

/// Step schedule: the base rate times `lr_drop_factor` once per drop point
/// already passed.
pub fn learning_rate_at(progress: f64, cfg: &TrainerConfig) -> f64 {
    let drops = cfg.lr_drop_points.iter().filter(|&&p| progress >= p).count();
    cfg.learning_rate * cfg.lr_drop_factor.powi(drops as i32)
}

/// Momentum buffer plus the counters the harness reports.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SgdState {
    velocity: Vec<f64>,
    /// Completed update steps.
    pub iteration: u64,
    /// Examples back-propagated so far.
    pub backprops: u64,
}

impl SgdState {
    pub fn new(model: &Mlp) -> Self {
        SgdState {
            velocity: vec![0.0; model.params().len()],
            iteration: 0,
            backprops: 0,
        }
    }
}

/// One SGD step on the batch mean gradient. Weight decay is added to the
/// gradient, the result folded into the momentum buffer, then the step is
/// taken at the rate for `progress`. Returns the batch mean loss.
pub fn backward_and_update(
    model: &mut Mlp,
    batch: &[&Example],
    cfg: &TrainerConfig,
    state: &mut SgdState,
    progress: f64,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::config("cannot update on an empty batch"));
    }
    if state.velocity.len() != model.params().len() {
        state.velocity = vec![0.0; model.params().len()];
    }
    let iteration = state.iteration;
    let (loss, mut grad) = model.loss_and_gradient(batch)?;
    if !loss.is_finite() {
        return Err(Error::Diverged {
            iteration,
            what: "loss",
        });
    }
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::Diverged {
            iteration,
            what: "gradient",
        });
    }
    let lr = learning_rate_at(progress, cfg);
    let params = model.params_mut();
    for ((p, g), v) in params.iter_mut().zip(&mut grad).zip(&mut state.velocity) {
        *g += cfg.weight_decay * *p;
        *v = cfg.momentum * *v + *g;
        *p -= lr * *v;
    }
    if !model.all_finite() {
        return Err(Error::Diverged {
            iteration,
            what: "parameters",
        });
    }
    state.iteration += 1;
    state.backprops += batch.len() as u64;
    Ok(loss)
}
