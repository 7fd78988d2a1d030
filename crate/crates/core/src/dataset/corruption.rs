use rand::prelude::*;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{CorruptionKind, Dataset, Example, Split};
use crate::error::{Error, Result};
use crate::rng;

/// Which transform to apply, to what fraction of the training split.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorruptionSpec {
    pub kind: CorruptionKind,
    pub fraction: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for CorruptionSpec {
    fn default() -> Self {
        CorruptionSpec {
            kind: CorruptionKind::None,
            fraction: 0.0,
            seed: 0,
        }
    }
}

impl CorruptionSpec {
    pub fn new(kind: CorruptionKind, fraction: f64, seed: u64) -> Self {
        CorruptionSpec {
            kind,
            fraction,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.fraction) {
            return Err(Error::config(format!(
                "corruption fraction {} outside [0, 1]",
                self.fraction
            )));
        }
        Ok(())
    }

    /// Number of training examples this spec corrupts out of `n`.
    pub fn corrupted_count(&self, n: usize) -> usize {
        if self.kind == CorruptionKind::None {
            return 0;
        }
        (self.fraction * n as f64).floor() as usize
    }
}

/// Replaces the label with one drawn uniformly from all `num_classes` classes,
/// the original included.
pub fn corrupt_random_label<R: Rng + ?Sized>(
    example: &Example,
    num_classes: usize,
    rng: &mut R,
) -> Example {
    debug_assert!(example.label < num_classes);
    Example {
        label: rng.gen_range(0..num_classes),
        corruption: CorruptionKind::RandomLabel,
        ..example.clone()
    }
}

/// A single random permutation of `0..dim`, shared by every shuffled example
/// in a run.
pub fn make_task_permutation(dim: usize, seed: u64) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..dim).collect();
    perm.shuffle(&mut rng::stream(seed, "pixel-permutation"));
    perm
}

pub fn invert_permutation(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (j, &p) in perm.iter().enumerate() {
        inv[p] = j;
    }
    inv
}

/// `features'[j] = features[perm[j]]`.
pub fn corrupt_shuffle_pixels(example: &Example, perm: &[usize]) -> Result<Example> {
    if perm.len() != example.features.len() {
        return Err(Error::config(format!(
            "permutation length {} does not match feature dimension {}",
            perm.len(),
            example.features.len()
        )));
    }
    let features = perm.iter().map(|&p| example.features[p]).collect();
    Ok(Example {
        id: example.id,
        features,
        label: example.label,
        corruption: CorruptionKind::ShuffledPixels,
    })
}

/// Sample mean and population variance of the features, the parameters the
/// Gaussian corruption draws from.
pub fn gaussian_parameters(features: &[f64]) -> (f64, f64) {
    if let Some(&first) = features.first() {
        if features.iter().all(|&x| x == first) {
            return (first, 0.0);
        }
    }
    let n = features.len() as f64;
    let mean = features.iter().sum::<f64>() / n;
    let var = features.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var)
}

/// Redraws every feature i.i.d. from a normal matching the example's own
/// mean and variance.
pub fn corrupt_gaussian<R: Rng + ?Sized>(example: &Example, rng: &mut R) -> Example {
    let (mean, var) = gaussian_parameters(&example.features);
    let std = var.sqrt();
    let features = example
        .features
        .iter()
        .map(|_| mean + std * rng.sample::<f64, _>(StandardNormal))
        .collect();
    Example {
        id: example.id,
        features,
        label: example.label,
        corruption: CorruptionKind::Gaussian,
    }
}

/// Indices of the examples a spec corrupts. Depends only on `(seed, n, count)`
/// so every corruption kind hits the same subset at a given seed.
pub(crate) fn corrupted_indices(spec: &CorruptionSpec, n: usize) -> Vec<usize> {
    let count = spec.corrupted_count(n);
    let mut chosen =
        rand::seq::index::sample(&mut rng::stream(spec.seed, "corruption-subset"), n, count)
            .into_vec();
    chosen.sort_unstable();
    chosen
}

/// Corrupts exactly `floor(fraction * N)` training examples chosen uniformly
/// without replacement.
pub fn apply_corruption(dataset: &Dataset, spec: &CorruptionSpec) -> Result<Dataset> {
    spec.validate()?;
    if dataset.split() != Split::Train {
        return Err(Error::config("only the training split may be corrupted"));
    }
    let mut examples = dataset.examples().to_vec();
    if spec.kind == CorruptionKind::None {
        return Ok(dataset.replace_examples(examples));
    }
    let chosen = corrupted_indices(spec, examples.len());
    let mut content_rng = rng::stream(spec.seed, "corruption-content");
    let perm = match spec.kind {
        CorruptionKind::ShuffledPixels => make_task_permutation(dataset.feature_dim(), spec.seed),
        _ => Vec::new(),
    };
    for i in chosen {
        let ex = &examples[i];
        examples[i] = match spec.kind {
            CorruptionKind::RandomLabel => {
                corrupt_random_label(ex, dataset.num_classes(), &mut content_rng)
            }
            CorruptionKind::ShuffledPixels => corrupt_shuffle_pixels(ex, &perm)?,
            CorruptionKind::Gaussian => corrupt_gaussian(ex, &mut content_rng),
            CorruptionKind::None => unreachable!(),
        };
    }
    Ok(dataset.replace_examples(examples))
}
