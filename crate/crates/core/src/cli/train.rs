use std::fs::File;
use std::io::BufWriter;

use rayon::prelude::*;

use super::{write_resolved_config, CliError, RunArgs};
use crate::dataset::write_snapshot;
use crate::harness::{aggregate_seeds, run_training, AggregatedMetrics, RunMetrics};

/// Trains the configured prioritizer once per seed.
///
/// With one seed the run files land directly in the output directory,
/// otherwise in `seed-<s>/` subdirectories next to a seed-averaged
/// `aggregate.csv`.
pub fn cmd_train(args: &RunArgs) -> Result<Vec<RunMetrics>, CliError> {
    let (cfg, out) = args.resolve()?;
    std::fs::create_dir_all(&out).map_err(crate::Error::from)?;
    write_resolved_config(&cfg, &out)?;

    let data = cfg.dataset.load_corrupted(&cfg.corruption)?;
    write_snapshot(&data.train, BufWriter::new(File::create(out.join("dataset.csv")).map_err(crate::Error::from)?))?;

    let pool = args.thread_pool()?;
    let runs: Vec<RunMetrics> = pool.install(|| {
        cfg.seeds
            .par_iter()
            .map(|&seed| {
                let (trainer, prio) = cfg.for_seed(&cfg.prioritizer, seed);
                run_training(&data, &trainer, &prio, cfg.eval_every)
            })
            .collect::<crate::Result<_>>()
    })?;

    if let [only] = runs.as_slice() {
        only.write_dir(&out)?;
    } else {
        for r in &runs {
            r.write_dir(&out.join(format!("seed-{}", r.seed)))?;
        }
        write_aggregate(&aggregate_seeds(&runs)?, &out.join("aggregate.csv"))?;
    }

    for r in &runs {
        println!(
            "seed {:>4}  {:<10}  best test error {:.4}  backprops {}{}",
            r.seed,
            cfg.prioritizer.kind,
            r.best_test_error(),
            r.total_backprops(),
            if r.diverged() { "  DIVERGED" } else { "" }
        );
    }
    let diverged = runs.iter().filter(|r| r.diverged()).count();
    if diverged > 0 {
        return Err(CliError::Diverged(diverged));
    }
    Ok(runs)
}

fn write_aggregate(agg: &AggregatedMetrics, path: &std::path::Path) -> crate::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["backprops", "test_error_mean", "test_error_std"])?;
    for p in &agg.test_error {
        w.write_record([p.x.to_string(), p.mean.to_string(), p.std.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
