//! Experiment configuration files (TOML). Every field has a default, so an
//! empty file is a valid desk-scale experiment, and the resolved form written
//! next to the results reproduces the run on its own.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{
    apply_corruption, load_idx, CorruptionKind, CorruptionSpec, DatasetPair, Split,
    SyntheticParams, SyntheticTask,
};
use crate::error::{Error, Result};
use crate::model::TrainerConfig;
use crate::prioritizer::{PrioritizerConfig, PrioritizerKind};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetSource {
    #[default]
    Synthetic,
    Idx,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdxPaths {
    pub train_images: PathBuf,
    pub train_labels: PathBuf,
    pub test_images: PathBuf,
    pub test_labels: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub source: DatasetSource,
    pub n_train: usize,
    pub n_test: usize,
    pub synthetic: SyntheticParams,
    pub idx: Option<IdxPaths>,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            source: DatasetSource::Synthetic,
            n_train: 5000,
            n_test: 1000,
            synthetic: SyntheticParams::default(),
            idx: None,
        }
    }
}

impl DatasetConfig {
    /// Clean train/test pair.
    pub fn load(&self) -> Result<DatasetPair> {
        match self.source {
            DatasetSource::Synthetic => {
                SyntheticTask::new(self.synthetic.clone())?.sample_pair(self.n_train, self.n_test)
            }
            DatasetSource::Idx => {
                let p = self
                    .idx
                    .as_ref()
                    .ok_or_else(|| Error::config("dataset.idx paths are required for source = \"idx\""))?;
                let train = load_idx(&p.train_images, &p.train_labels, self.n_train, Split::Train)?;
                let test = load_idx(&p.test_images, &p.test_labels, self.n_test, Split::Test)?;
                // K from the union of both splits
                let k = train.num_classes().max(test.num_classes());
                let rebuild = |d: crate::dataset::Dataset, split| {
                    crate::dataset::Dataset::new(d.examples().to_vec(), k, d.feature_dim(), split)
                };
                DatasetPair::new(rebuild(train, Split::Train)?, rebuild(test, Split::Test)?)
            }
        }
    }

    /// Clean pair with `corruption` applied to the training split.
    pub fn load_corrupted(&self, corruption: &CorruptionSpec) -> Result<DatasetPair> {
        let clean = self.load()?;
        DatasetPair::new(apply_corruption(&clean.train, corruption)?, clean.test)
    }
}

/// One row of a benchmark: a display name plus the strategy settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Variant {
    pub name: String,
    #[serde(default)]
    pub prioritizer: PrioritizerConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorruptionGridEntry {
    pub kind: CorruptionKind,
    pub fractions: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub corruptions: Vec<CorruptionGridEntry>,
    pub variants: Vec<Variant>,
}

impl BenchmarkConfig {
    /// Pristine plus 25%/50% of each corruption, against standard training,
    /// SB at 50% and 33% selectivity, and VR with pools of 3 and 2 batches.
    pub fn table_grid(batch_size: usize) -> Self {
        let halves = vec![0.25, 0.5];
        BenchmarkConfig {
            corruptions: vec![
                CorruptionGridEntry {
                    kind: CorruptionKind::None,
                    fractions: vec![0.0],
                },
                CorruptionGridEntry {
                    kind: CorruptionKind::RandomLabel,
                    fractions: halves.clone(),
                },
                CorruptionGridEntry {
                    kind: CorruptionKind::ShuffledPixels,
                    fractions: halves.clone(),
                },
                CorruptionGridEntry {
                    kind: CorruptionKind::Gaussian,
                    fractions: halves,
                },
            ],
            variants: vec![
                Variant {
                    name: "Standard".into(),
                    prioritizer: PrioritizerConfig::uniform(),
                },
                Variant {
                    name: "SB (50% selectivity)".into(),
                    prioritizer: PrioritizerConfig::sb_loss(1.0),
                },
                Variant {
                    name: "SB (33% selectivity)".into(),
                    prioritizer: PrioritizerConfig::sb_loss(2.0),
                },
                Variant {
                    name: "VR (max 33% selectivity)".into(),
                    prioritizer: PrioritizerConfig::vr(3, batch_size),
                },
                Variant {
                    name: "VR (max 50% selectivity)".into(),
                    prioritizer: PrioritizerConfig::vr(2, batch_size),
                },
            ],
        }
    }

    /// `(kind, fraction)` cells in grid order.
    pub fn cells(&self) -> Vec<(CorruptionKind, f64)> {
        self.corruptions
            .iter()
            .flat_map(|e| e.fractions.iter().map(move |&f| (e.kind, f)))
            .collect()
    }
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig::table_grid(TrainerConfig::default().batch_size)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub output_dir: Option<PathBuf>,
    pub seeds: Vec<u64>,
    /// Evaluate the test split every this many backprops.
    pub eval_every: u64,
    /// Speedup threshold multiplier.
    pub slack: f64,
    pub dataset: DatasetConfig,
    pub corruption: CorruptionSpec,
    pub trainer: TrainerConfig,
    pub prioritizer: PrioritizerConfig,
    pub benchmark: BenchmarkConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            output_dir: None,
            seeds: vec![0],
            eval_every: 1280,
            slack: crate::harness::DEFAULT_SLACK,
            dataset: DatasetConfig::default(),
            corruption: CorruptionSpec::default(),
            trainer: TrainerConfig::default(),
            prioritizer: PrioritizerConfig::default(),
            benchmark: BenchmarkConfig::default(),
        }
    }
}

/// A config problem located in the source text where possible.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

fn line_of_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Line of `key` inside `[section]` (or at top level when `section` is
/// empty), if it appears.
fn locate(text: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.starts_with('[') {
            current = line.trim_matches(|c| c == '[' || c == ']').trim().to_string();
            continue;
        }
        let k = line.split('=').next().unwrap_or("").trim();
        if k == key && current == section {
            return Some(i + 1);
        }
    }
    // the section header itself is the next best thing
    text.lines()
        .position(|l| l.trim().trim_matches(|c| c == '[' || c == ']') == section)
        .map(|i| i + 1)
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> std::result::Result<Self, ConfigError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| ConfigError {
            line: e.span().map(|s| line_of_offset(text, s.start)),
            message: e.message().trim().to_string(),
        })?;
        cfg.validate().map_err(|(section, key, msg)| ConfigError {
            line: locate(text, section, key),
            message: msg,
        })?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> std::result::Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
            line: None,
            message: format!("cannot read {}: {e}", path.display()),
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Semantic checks; errors carry `(section, key, message)`.
    pub fn validate(&self) -> std::result::Result<(), (&'static str, &'static str, String)> {
        fn field(e: Error) -> String {
            match e {
                Error::Config(m) => m,
                other => other.to_string(),
            }
        }
        if self.seeds.is_empty() {
            return Err(("", "seeds", "seeds must list at least one seed".into()));
        }
        if self.eval_every == 0 {
            return Err(("", "eval_every", "eval_every must be positive".into()));
        }
        if self.slack.is_nan() || self.slack <= 1.0 {
            return Err(("", "slack", "slack must exceed 1".into()));
        }
        if let Err(e) = self.trainer.validate() {
            let msg = field(e);
            let key = msg
                .strip_prefix("trainer.")
                .and_then(|m| m.split_whitespace().next())
                .map(|k| TRAINER_KEYS.iter().find(|t| **t == k).copied().unwrap_or(""))
                .unwrap_or("");
            return Err(("trainer", key, msg));
        }
        if let Err(e) = self.corruption.validate() {
            return Err(("corruption", "fraction", field(e)));
        }
        if self.dataset.source == DatasetSource::Synthetic {
            if let Err(e) = self.dataset.synthetic.validate() {
                return Err(("dataset.synthetic", "", field(e)));
            }
        }
        if self.dataset.n_train < self.trainer.batch_size {
            return Err((
                "dataset",
                "n_train",
                format!(
                    "n_train {} is smaller than batch size {}",
                    self.dataset.n_train, self.trainer.batch_size
                ),
            ));
        }
        if let Err(e) = self.prioritizer.validate(self.trainer.batch_size) {
            return Err(("prioritizer", "", field(e)));
        }
        for v in &self.benchmark.variants {
            if let Err(e) = v.prioritizer.validate(self.trainer.batch_size) {
                return Err(("benchmark", "variants", format!("variant `{}`: {}", v.name, field(e))));
            }
        }
        for c in &self.benchmark.corruptions {
            if c.fractions.iter().any(|f| !(0.0..=1.0).contains(f)) {
                return Err((
                    "benchmark",
                    "corruptions",
                    format!("{} fractions must lie in [0, 1]", c.kind),
                ));
            }
        }
        Ok(())
    }

    /// Trainer and prioritizer settings for one seed of a run.
    pub fn for_seed(&self, prioritizer: &PrioritizerConfig, seed: u64) -> (TrainerConfig, PrioritizerConfig) {
        let trainer = TrainerConfig {
            seed,
            ..self.trainer.clone()
        };
        (trainer, prioritizer.clone().with_seed(seed))
    }

    pub fn uses_uniform(&self) -> bool {
        self.prioritizer.kind == PrioritizerKind::Uniform
    }
}

const TRAINER_KEYS: &[&str] = &[
    "learning_rate",
    "momentum",
    "weight_decay",
    "lr_drop_factor",
    "lr_drop_points",
    "batch_size",
    "total_epochs",
    "hidden_layers",
];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_defaults() {
        let cfg = ExperimentConfig::from_toml("").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(cfg.trainer.learning_rate, 0.1);
        assert_eq!(cfg.trainer.momentum, 0.9);
        assert_eq!(cfg.trainer.weight_decay, 0.0005);
        assert_eq!(cfg.trainer.batch_size, 128);
        assert_eq!(cfg.trainer.lr_drop_factor, 0.2);
        assert_eq!(cfg.trainer.lr_drop_points, vec![0.6, 0.8]);
        assert_eq!(cfg.dataset.n_train, 5000);
        assert_eq!(cfg.dataset.synthetic.feature_dim, 32);
        assert_eq!(cfg.dataset.synthetic.num_classes, 10);
        assert_eq!(cfg.trainer.total_epochs, 20);
    }

    #[test]
    fn resolved_round_trips() {
        let text = r#"
seeds = [3, 4]
[trainer]
total_epochs = 2
max_backprops = 1000
[prioritizer]
kind = "sb_entropy"
beta = 2.0
[corruption]
kind = "gaussian"
fraction = 0.25
seed = 9
"#;
        let cfg = ExperimentConfig::from_toml(text).unwrap();
        let again = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(again.prioritizer.kind, PrioritizerKind::SbEntropy);
    }

    #[test]
    fn parse_error_has_line() {
        let err = ExperimentConfig::from_toml("seeds = [1]\n[trainer]\nmomentum = \"x\"\n").unwrap_err();
        assert_eq!(err.line, Some(3), "{err}");
    }

    #[test]
    fn unknown_kind_is_rejected_with_line() {
        let err = ExperimentConfig::from_toml("[prioritizer]\nbeta = 1.0\nkind = \"magic\"\n").unwrap_err();
        assert_eq!(err.line, Some(3), "{err}");
    }

    #[test]
    fn validation_error_has_line() {
        let text = "seeds = [1]\n\n[trainer]\nlearning_rate = 0.1\nmomentum = 1.5\n";
        let err = ExperimentConfig::from_toml(text).unwrap_err();
        assert_eq!(err.line, Some(5), "{err}");
        assert!(err.to_string().starts_with("line 5:"));
    }

    #[test]
    fn default_grid_matches_table_layout() {
        let b = BenchmarkConfig::default();
        assert_eq!(b.cells().len(), 7);
        assert_eq!(b.variants.len(), 5);
        assert_eq!(b.variants[3].prioritizer.pool_capacity, 384);
        assert_eq!(b.variants[4].prioritizer.pool_capacity, 256);
    }
}
