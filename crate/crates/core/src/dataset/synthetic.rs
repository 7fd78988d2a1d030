use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{StandardNormal, WeightedIndex};
use serde::{Deserialize, Serialize};

use super::{Dataset, DatasetPair, Example, Split};
use crate::error::{Error, Result};
use crate::rng::derive_seed;

/// Gaussian-mixture classification task.
///
/// Each class owns `clusters_per_class` centers drawn once per task. Cluster
/// `m` of a class is chosen with weight `cluster_tail^m`, so every class has a
/// common mode and progressively rarer ones. Rare modes are the "atypical but
/// learnable" examples; `spread` relative to `separation` sets class overlap.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticParams {
    pub num_classes: usize,
    pub feature_dim: usize,
    pub clusters_per_class: usize,
    pub cluster_tail: f64,
    pub separation: f64,
    pub spread: f64,
    pub seed: u64,
}

impl Default for SyntheticParams {
    fn default() -> Self {
        SyntheticParams {
            num_classes: 10,
            feature_dim: 32,
            clusters_per_class: 4,
            cluster_tail: 0.35,
            separation: 1.0,
            spread: 0.75,
            seed: 0,
        }
    }
}

impl SyntheticParams {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::config("synthetic task needs at least 2 classes"));
        }
        if self.feature_dim < 2 {
            return Err(Error::config("synthetic task needs feature_dim >= 2"));
        }
        if self.clusters_per_class == 0 {
            return Err(Error::config("clusters_per_class must be positive"));
        }
        if !(self.cluster_tail > 0.0 && self.cluster_tail <= 1.0) {
            return Err(Error::config("cluster_tail must lie in (0, 1]"));
        }
        if !(self.separation.is_finite() && self.separation > 0.0) {
            return Err(Error::config("separation must be positive"));
        }
        if !(self.spread.is_finite() && self.spread >= 0.0) {
            return Err(Error::config("spread must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticTask {
    params: SyntheticParams,
    // centers[class][cluster] -> D-vector
    centers: Vec<Vec<Vec<f64>>>,
    cluster_choice: WeightedIndex<f64>,
}

impl SyntheticTask {
    pub fn new(params: SyntheticParams) -> Result<Self> {
        params.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(params.seed, "centers"));
        let centers = (0..params.num_classes)
            .map(|_| {
                (0..params.clusters_per_class)
                    .map(|_| {
                        (0..params.feature_dim)
                            .map(|_| params.separation * rng.sample::<f64, _>(StandardNormal))
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let weights: Vec<f64> = (0..params.clusters_per_class)
            .map(|m| params.cluster_tail.powi(m as i32))
            .collect();
        let cluster_choice = WeightedIndex::new(weights)
            .map_err(|e| Error::config(format!("cluster weights: {e}")))?;
        Ok(SyntheticTask {
            params,
            centers,
            cluster_choice,
        })
    }

    pub fn params(&self) -> &SyntheticParams {
        &self.params
    }

    /// Draws `n` examples with class counts balanced within one.
    pub fn sample(&self, n: usize, split: Split) -> Result<Dataset> {
        let k = self.params.num_classes;
        if n < k {
            return Err(Error::config(format!(
                "need at least one example per class ({n} < {k})"
            )));
        }
        let stream = match split {
            Split::Train => "train",
            Split::Test => "test",
        };
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.params.seed, stream));
        let mut labels: Vec<usize> = (0..n).map(|i| i % k).collect();
        labels.shuffle(&mut rng);
        let examples = labels
            .into_iter()
            .enumerate()
            .map(|(i, label)| {
                let cluster = self.cluster_choice.sample(&mut rng);
                let center = &self.centers[label][cluster];
                let features = center
                    .iter()
                    .map(|&c| c + self.params.spread * rng.sample::<f64, _>(StandardNormal))
                    .collect();
                Example::new(i as u64, features, label)
            })
            .collect();
        Dataset::new(examples, k, self.params.feature_dim, split)
    }

    pub fn sample_pair(&self, n_train: usize, n_test: usize) -> Result<DatasetPair> {
        DatasetPair::new(
            self.sample(n_train, Split::Train)?,
            self.sample(n_test, Split::Test)?,
        )
    }
}

/// Training split of the default task shape with the given dimensions.
pub fn generate_synthetic(
    num_examples: usize,
    num_classes: usize,
    feature_dim: usize,
    seed: u64,
) -> Result<Dataset> {
    let params = SyntheticParams {
        num_classes,
        feature_dim,
        seed,
        ..SyntheticParams::default()
    };
    SyntheticTask::new(params)?.sample(num_examples, Split::Train)
}
