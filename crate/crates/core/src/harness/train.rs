use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::metrics::{BatchRecord, EvalPoint, RunMetrics};
use crate::dataset::{Dataset, DatasetPair, Example};
use crate::error::{Error, Result};
use crate::model::{backward_and_update, Mlp, SgdState, TrainerConfig};
use crate::prioritizer::{make_prioritizer, Candidate, PrioritizerConfig};
use crate::rng;

const EVAL_CHUNK: usize = 256;

/// Fraction of `dataset` the model misclassifies.
pub fn test_error(model: &Mlp, dataset: &Dataset) -> f64 {
    if dataset.is_empty() {
        return 0.0;
    }
    // integer partial counts, so the result is independent of scheduling
    let wrong: usize = dataset
        .examples()
        .par_chunks(EVAL_CHUNK)
        .map(|chunk| {
            let mut acts = Vec::new();
            chunk
                .iter()
                .filter(|ex| model.predict(ex, &mut acts) != ex.label)
                .count()
        })
        .sum();
    wrong as f64 / dataset.len() as f64
}

/// Trained model plus everything measured along the way.
#[derive(Debug)]
pub struct TrainingOutcome {
    pub model: Mlp,
    pub metrics: RunMetrics,
}

/// Runs one training job and returns only the metrics.
pub fn run_training(
    data: &DatasetPair,
    trainer: &TrainerConfig,
    prioritizer: &PrioritizerConfig,
    eval_every: u64,
) -> Result<RunMetrics> {
    train(data, trainer, prioritizer, eval_every).map(|o| o.metrics)
}

/// Epoch loop: shuffle, score candidate batches of size `B` with a forward
/// pass, hand them to the prioritizer, and back-propagate whatever it emits.
///
/// The test split is evaluated before training and then each time the
/// backprop count crosses a multiple of `eval_every`. The learning-rate
/// schedule follows epochs, i.e. forward passes over the data. The trailing
/// `N mod B` examples of each shuffled epoch are not scored.
///
/// A non-finite loss or update stops the run and returns what was measured
/// so far with `divergence` set.
pub fn train(
    data: &DatasetPair,
    trainer: &TrainerConfig,
    prioritizer: &PrioritizerConfig,
    eval_every: u64,
) -> Result<TrainingOutcome> {
    train_observed(data, trainer, prioritizer, eval_every, |_| {})
}

/// [`train`], calling `on_batch` with the ids of every batch just before it
/// is back-propagated.
pub fn train_observed<F: FnMut(&[u64])>(
    data: &DatasetPair,
    trainer: &TrainerConfig,
    prioritizer: &PrioritizerConfig,
    eval_every: u64,
    mut on_batch: F,
) -> Result<TrainingOutcome> {
    trainer.validate()?;
    if eval_every == 0 {
        return Err(Error::config("eval_every must be positive"));
    }
    let train_set = &data.train;
    let b = trainer.batch_size;
    if train_set.len() < b {
        return Err(Error::config(format!(
            "training set of {} examples is smaller than batch size {b}",
            train_set.len()
        )));
    }
    let mut prio = make_prioritizer(prioritizer, b)?;
    let arch = trainer.architecture(train_set.feature_dim(), train_set.num_classes());
    let mut model = Mlp::new(&arch, trainer.seed)?;
    let mut sgd = SgdState::new(&model);
    let mut shuffle_rng = rng::stream(trainer.seed, "shuffle");

    let examples = train_set.examples();
    let position: HashMap<u64, usize> = examples.iter().enumerate().map(|(i, e)| (e.id, i)).collect();
    let mut picks = vec![0u64; examples.len()];
    let mut order: Vec<usize> = (0..examples.len()).collect();

    let mut metrics = RunMetrics {
        seed: trainer.seed,
        ..Default::default()
    };
    metrics.eval_points.push(EvalPoint {
        iteration: 0,
        backprops: 0,
        test_error: test_error(&model, &data.test),
    });
    let mut next_eval = eval_every;

    'epochs: for epoch in 0..trainer.total_epochs {
        let progress = epoch as f64 / trainer.total_epochs as f64;
        order.shuffle(&mut shuffle_rng);
        for chunk in order.chunks_exact(b) {
            let batch: Vec<&Example> = chunk.iter().map(|&i| &examples[i]).collect();
            let scored = model.forward(batch.iter().copied())?;
            if let Some(r) = scored.iter().find(|r| !r.loss.is_finite()) {
                metrics.divergence = Some(format!(
                    "non-finite forward loss {} at iteration {}",
                    r.loss, sgd.iteration
                ));
                break 'epochs;
            }
            let candidates: Vec<Candidate> = batch
                .iter()
                .zip(&scored)
                .map(|(ex, r)| Candidate {
                    id: ex.id,
                    loss: r.loss,
                    probs: &r.probs,
                })
                .collect();

            for emitted in prio.feed(&candidates)? {
                let idx: Vec<usize> = emitted
                    .ids
                    .iter()
                    .map(|id| position[id])
                    .collect();
                let train_batch: Vec<&Example> = idx.iter().map(|&i| &examples[i]).collect();
                on_batch(&emitted.ids);
                match backward_and_update(&mut model, &train_batch, trainer, &mut sgd, progress) {
                    Ok(_) => {}
                    Err(e @ Error::Diverged { .. }) => {
                        metrics.divergence = Some(e.to_string());
                        break 'epochs;
                    }
                    Err(e) => return Err(e),
                }
                let corrupted = train_batch.iter().filter(|e| e.corrupted()).count();
                for &i in &idx {
                    picks[i] += 1;
                }
                metrics.batches.push(BatchRecord {
                    iteration: sgd.iteration,
                    backprops: sgd.backprops,
                    corrupted_fraction: corrupted as f64 / train_batch.len() as f64,
                    gate_on: emitted.gate_on,
                });
                if sgd.backprops >= next_eval {
                    metrics.eval_points.push(EvalPoint {
                        iteration: sgd.iteration,
                        backprops: sgd.backprops,
                        test_error: test_error(&model, &data.test),
                    });
                    while next_eval <= sgd.backprops {
                        next_eval += eval_every;
                    }
                }
                if trainer.max_backprops.is_some_and(|cap| sgd.backprops >= cap) {
                    break 'epochs;
                }
            }
        }
    }

    metrics.pick_counts = examples
        .iter()
        .zip(picks)
        .map(|(e, p)| (e.id, p))
        .collect::<BTreeMap<_, _>>();
    Ok(TrainingOutcome { model, metrics })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{SyntheticParams, SyntheticTask};

    fn small_pair() -> DatasetPair {
        let task = SyntheticTask::new(SyntheticParams {
            num_classes: 3,
            feature_dim: 4,
            ..Default::default()
        })
        .unwrap();
        task.sample_pair(200, 60).unwrap()
    }

    fn small_trainer() -> TrainerConfig {
        TrainerConfig {
            batch_size: 16,
            total_epochs: 3,
            hidden_layers: vec![8],
            ..TrainerConfig::default()
        }
    }

    #[test]
    fn accounting_identity() {
        let data = small_pair();
        let m = run_training(&data, &small_trainer(), &PrioritizerConfig::sb_loss(1.0), 32).unwrap();
        assert_eq!(m.total_picks(), m.total_backprops());
        assert!(m.total_backprops() > 0);
        assert!(m.eval_points.windows(2).all(|w| w[0].backprops <= w[1].backprops));
        assert_eq!(m.pick_counts.len(), 200);
    }

    #[test]
    fn eval_schedule_is_backprop_multiples() {
        let data = small_pair();
        let m = run_training(&data, &small_trainer(), &PrioritizerConfig::uniform(), 32).unwrap();
        let bp: Vec<u64> = m.eval_points.iter().map(|p| p.backprops).collect();
        assert_eq!(bp[0], 0);
        assert!(bp[1..].iter().enumerate().all(|(i, &b)| b == 32 * (i as u64 + 1)));
        // 200 / 16 = 12 batches per epoch
        assert_eq!(m.total_backprops(), 3 * 12 * 16);
    }

    #[test]
    fn backprop_budget_caps_the_run() {
        let data = small_pair();
        let cfg = TrainerConfig {
            max_backprops: Some(100),
            ..small_trainer()
        };
        let m = run_training(&data, &cfg, &PrioritizerConfig::uniform(), 32).unwrap();
        assert_eq!(m.total_backprops(), 112);
    }

    #[test]
    fn divergence_keeps_partial_metrics() {
        let data = small_pair();
        let cfg = TrainerConfig {
            learning_rate: 1e300,
            momentum: 0.0,
            ..small_trainer()
        };
        let m = run_training(&data, &cfg, &PrioritizerConfig::uniform(), 16).unwrap();
        assert!(m.diverged(), "{m:?}");
        assert_eq!(m.total_picks(), m.total_backprops());
    }

    #[test]
    fn rejects_tiny_training_set() {
        let data = small_pair();
        let cfg = TrainerConfig {
            batch_size: 500,
            ..small_trainer()
        };
        assert!(run_training(&data, &cfg, &PrioritizerConfig::uniform(), 10).is_err());
    }
}
