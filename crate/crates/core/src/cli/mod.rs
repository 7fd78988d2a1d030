//! `lossprio` command line: `train`, `benchmark`, `selftest`.

mod benchmark;
mod selftest;
mod train;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::{ConfigError, ExperimentConfig};

pub use benchmark::{cmd_benchmark, BenchmarkRow};
pub use selftest::{cmd_selftest, run_selftest, PropertyResult};
pub use train::cmd_train;

/// Default output root when neither `--out` nor `output_dir` is given.
pub const OUT_ROOT_ENV: &str = "LOSSPRIO_OUT";

#[derive(Debug, Parser)]
#[command(name = "lossprio", version, about = "Loss-based example prioritization experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one configuration for each seed.
    Train(RunArgs),
    /// Run the corruption grid against every variant and report speedups.
    Benchmark(RunArgs),
    /// Check the core statistical and numerical properties.
    Selftest,
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// TOML experiment file; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Comma-separated seeds, overriding the config.
    #[arg(long, value_delimiter = ',')]
    pub seed: Option<Vec<u64>>,
    /// Worker threads for parallel runs.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Config { path: String, source: ConfigError },
    #[error(transparent)]
    Run(#[from] crate::Error),
    #[error("{0} run(s) diverged")]
    Diverged(usize),
}

impl RunArgs {
    /// Loads and validates the config, applying `--seed` and `--out`.
    pub fn resolve(&self) -> Result<(ExperimentConfig, PathBuf), CliError> {
        let (mut cfg, stem) = match &self.config {
            Some(p) => (
                ExperimentConfig::from_file(p).map_err(|source| CliError::Config {
                    path: p.display().to_string(),
                    source,
                })?,
                p.file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| "experiment".into()),
            ),
            None => (ExperimentConfig::default(), "default".to_string()),
        };
        if let Some(seeds) = &self.seed {
            cfg.seeds = seeds.clone();
        }
        let config_err = |message: String| CliError::Config {
            path: self
                .config
                .as_deref()
                .map_or_else(|| "<defaults>".into(), |p| p.display().to_string()),
            source: ConfigError {
                line: None,
                message,
            },
        };
        cfg.validate().map_err(|(_, _, m)| config_err(m))?;
        let out = match (&self.out, &cfg.output_dir) {
            (Some(o), _) => o.clone(),
            (None, Some(o)) => o.clone(),
            (None, None) => default_root().join(stem),
        };
        cfg.output_dir = Some(out.clone());
        Ok((cfg, out))
    }

    pub(crate) fn thread_pool(&self) -> Result<rayon::ThreadPool, CliError> {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(n) = self.threads {
            b = b.num_threads(n.max(1));
        }
        b.build()
            .map_err(|e| CliError::Run(crate::Error::config(format!("thread pool: {e}"))))
    }
}

fn default_root() -> PathBuf {
    std::env::var_os(OUT_ROOT_ENV).map_or_else(|| PathBuf::from("runs"), PathBuf::from)
}

pub(crate) fn write_resolved_config(cfg: &ExperimentConfig, out: &Path) -> crate::Result<()> {
    std::fs::write(out.join("config.resolved.toml"), cfg.to_toml())?;
    Ok(())
}

/// Runs the parsed command; returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let result = match cli.command {
        Command::Train(args) => cmd_train(&args).map(|_| ()),
        Command::Benchmark(args) => cmd_benchmark(&args).map(|_| ()),
        Command::Selftest => cmd_selftest(),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
