//! Labeled datasets, the three corruption transforms, and the ingestion paths
//! (synthetic generation and raw IDX files).

mod corruption;
mod idx;
mod snapshot;
mod synthetic;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use corruption::{
    apply_corruption, corrupt_gaussian, corrupt_random_label, corrupt_shuffle_pixels,
    gaussian_parameters, invert_permutation, make_task_permutation, CorruptionSpec,
};
pub use idx::{load_idx, load_idx_images, load_idx_labels, IdxImages};
pub use snapshot::{read_snapshot, write_snapshot, SnapshotRecord};
pub use synthetic::{generate_synthetic, SyntheticParams, SyntheticTask};

/// What, if anything, was done to an example after it was drawn.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorruptionKind {
    #[default]
    None,
    RandomLabel,
    ShuffledPixels,
    Gaussian,
}

impl CorruptionKind {
    pub const ALL: [CorruptionKind; 4] = [
        CorruptionKind::None,
        CorruptionKind::RandomLabel,
        CorruptionKind::ShuffledPixels,
        CorruptionKind::Gaussian,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CorruptionKind::None => "none",
            CorruptionKind::RandomLabel => "random_label",
            CorruptionKind::ShuffledPixels => "shuffled_pixels",
            CorruptionKind::Gaussian => "gaussian",
        }
    }
}

impl std::fmt::Display for CorruptionKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for CorruptionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CorruptionKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown corruption kind `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

/// One training point. `corrupted()` is derived from `corruption`, so the two
/// can never disagree.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub id: u64,
    pub features: Vec<f64>,
    pub label: usize,
    pub corruption: CorruptionKind,
}

impl Example {
    pub fn new(id: u64, features: Vec<f64>, label: usize) -> Self {
        Example {
            id,
            features,
            label,
            corruption: CorruptionKind::None,
        }
    }

    pub fn corrupted(&self) -> bool {
        self.corruption != CorruptionKind::None
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    examples: Vec<Example>,
    num_classes: usize,
    feature_dim: usize,
    split: Split,
}

impl Dataset {
    /// Validates shapes, label range and id uniqueness.
    pub fn new(
        examples: Vec<Example>,
        num_classes: usize,
        feature_dim: usize,
        split: Split,
    ) -> Result<Self> {
        if num_classes == 0 {
            return Err(Error::config("num_classes must be positive"));
        }
        if feature_dim == 0 {
            return Err(Error::config("feature_dim must be positive"));
        }
        let mut seen = std::collections::HashSet::with_capacity(examples.len());
        for ex in &examples {
            if ex.features.len() != feature_dim {
                return Err(Error::config(format!(
                    "example {} has {} features, dataset dimension is {feature_dim}",
                    ex.id,
                    ex.features.len()
                )));
            }
            if ex.label >= num_classes {
                return Err(Error::config(format!(
                    "example {} has label {} outside [0, {num_classes})",
                    ex.id, ex.label
                )));
            }
            if !seen.insert(ex.id) {
                return Err(Error::config(format!("duplicate example id {}", ex.id)));
            }
        }
        Ok(Dataset {
            examples,
            num_classes,
            feature_dim,
            split,
        })
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn corrupted_count(&self) -> usize {
        self.examples.iter().filter(|e| e.corrupted()).count()
    }

    /// Ground-truth corruption mask indexed by position.
    pub fn corruption_mask(&self) -> Vec<bool> {
        self.examples.iter().map(Example::corrupted).collect()
    }

    /// Keeps only the first `n` examples.
    pub fn truncate(&mut self, n: usize) {
        self.examples.truncate(n);
    }

    pub(crate) fn replace_examples(&self, examples: Vec<Example>) -> Self {
        Dataset {
            examples,
            num_classes: self.num_classes,
            feature_dim: self.feature_dim,
            split: self.split,
        }
    }
}

/// A train/test pair sharing `K` and `D`.
#[derive(Clone, Debug)]
pub struct DatasetPair {
    pub train: Dataset,
    pub test: Dataset,
}

impl DatasetPair {
    pub fn new(train: Dataset, test: Dataset) -> Result<Self> {
        if train.num_classes() != test.num_classes() || train.feature_dim() != test.feature_dim()
        {
            return Err(Error::config(format!(
                "train (K={}, D={}) and test (K={}, D={}) disagree",
                train.num_classes(),
                train.feature_dim(),
                test.num_classes(),
                test.feature_dim()
            )));
        }
        if test.corrupted_count() > 0 {
            return Err(Error::config("test split must not be corrupted"));
        }
        Ok(DatasetPair { train, test })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_label_out_of_range() {
        let ex = Example::new(0, vec![0.0, 1.0], 3);
        assert!(Dataset::new(vec![ex], 3, 2, Split::Train).is_err());
    }

    #[test]
    fn rejects_duplicate_ids() {
        let a = Example::new(4, vec![0.0, 1.0], 0);
        let b = Example::new(4, vec![1.0, 1.0], 1);
        assert!(Dataset::new(vec![a, b], 2, 2, Split::Train).is_err());
    }

    #[test]
    fn corruption_kind_parses_its_own_name() {
        for k in CorruptionKind::ALL {
            assert_eq!(k.as_str().parse::<CorruptionKind>().unwrap(), k);
        }
        assert!("blur".parse::<CorruptionKind>().is_err());
    }
}
