use std::collections::HashMap;
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use super::{write_resolved_config, CliError, RunArgs};
use crate::config::Variant;
use crate::dataset::{apply_corruption, CorruptionKind, CorruptionSpec, DatasetPair};
use crate::harness::{aggregate_seeds, run_training, speedup_from_curves, RunMetrics, SpeedupReport};
use crate::prioritizer::{PrioritizerConfig, PrioritizerKind};

/// One (corruption cell, variant) result.
#[derive(Clone, Debug, Serialize)]
pub struct BenchmarkRow {
    pub corruption: CorruptionKind,
    pub fraction: f64,
    pub variant: String,
    #[serde(flatten)]
    pub report: SpeedupReport,
    /// Mean over seeds of each run's best test error.
    pub mean_best_error: f64,
    /// Mean corrupted fraction of back-propagated batches, over seeds.
    pub corrupted_fraction: f64,
    pub gate_on_fraction: Option<f64>,
}

fn slug(s: &str) -> String {
    let mut out = String::new();
    for c in s.chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c.to_ascii_lowercase());
        } else if !out.ends_with('-') {
            out.push('-');
        }
    }
    out.trim_matches('-').to_string()
}

fn cell_label(kind: CorruptionKind, fraction: f64) -> String {
    format!("{kind}-{}", (fraction * 100.0).round())
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

/// Standard training is run first for every cell; each variant is then
/// compared against that cell's seed-averaged baseline curve. Uniform
/// variants reuse the baseline runs.
pub fn cmd_benchmark(args: &RunArgs) -> Result<Vec<BenchmarkRow>, CliError> {
    let (cfg, out) = args.resolve()?;
    std::fs::create_dir_all(&out).map_err(crate::Error::from)?;
    write_resolved_config(&cfg, &out)?;

    let cells = cfg.benchmark.cells();
    let clean = cfg.dataset.load()?;
    let data: Vec<DatasetPair> = cells
        .iter()
        .map(|&(kind, fraction)| {
            let spec = CorruptionSpec::new(kind, fraction, cfg.corruption.seed);
            DatasetPair::new(apply_corruption(&clean.train, &spec)?, clean.test.clone())
        })
        .collect::<crate::Result<_>>()?;

    let baseline = PrioritizerConfig::uniform();
    let variants: &[Variant] = &cfg.benchmark.variants;
    // job key: (cell, Some(variant) | None for baseline, seed)
    let mut jobs: Vec<(usize, Option<usize>, u64)> = Vec::new();
    for c in 0..cells.len() {
        jobs.extend(cfg.seeds.iter().map(|&s| (c, None, s)));
    }
    for c in 0..cells.len() {
        for (v, variant) in variants.iter().enumerate() {
            if variant.prioritizer.kind != PrioritizerKind::Uniform {
                jobs.extend(cfg.seeds.iter().map(|&s| (c, Some(v), s)));
            }
        }
    }

    let pool = args.thread_pool()?;
    let results: Vec<RunMetrics> = pool.install(|| {
        jobs.par_iter()
            .map(|&(c, v, seed)| {
                let prio = v.map_or(&baseline, |v| &variants[v].prioritizer);
                let (trainer, prio) = cfg.for_seed(prio, seed);
                run_training(&data[c], &trainer, &prio, cfg.eval_every)
            })
            .collect::<crate::Result<_>>()
    })?;
    let by_job: HashMap<(usize, Option<usize>), Vec<&RunMetrics>> =
        jobs.iter()
            .zip(&results)
            .fold(HashMap::new(), |mut m, (&(c, v, _), r)| {
                m.entry((c, v)).or_default().push(r);
                m
            });

    let runs_dir = out.join("runs");
    let mut rows = Vec::new();
    for (c, &(kind, fraction)) in cells.iter().enumerate() {
        let base_runs: Vec<RunMetrics> = by_job[&(c, None)].iter().map(|r| (*r).clone()).collect();
        let base_curve = aggregate_seeds(&base_runs)?.eval_curve();
        for r in &base_runs {
            r.write_dir(&runs_dir.join(cell_label(kind, fraction)).join("standard-baseline").join(format!("seed-{}", r.seed)))?;
        }
        for (v, variant) in variants.iter().enumerate() {
            let key = if variant.prioritizer.kind == PrioritizerKind::Uniform {
                (c, None)
            } else {
                (c, Some(v))
            };
            let runs: Vec<RunMetrics> = by_job[&key].iter().map(|r| (*r).clone()).collect();
            if key.1.is_some() {
                for r in &runs {
                    r.write_dir(&runs_dir.join(cell_label(kind, fraction)).join(slug(&variant.name)).join(format!("seed-{}", r.seed)))?;
                }
            }
            let agg = aggregate_seeds(&runs)?;
            let report = speedup_from_curves(&base_curve, &agg.eval_curve(), cfg.slack)?;
            let gates: Vec<f64> = runs.iter().filter_map(RunMetrics::gate_on_fraction).collect();
            rows.push(BenchmarkRow {
                corruption: kind,
                fraction,
                variant: variant.name.clone(),
                report,
                mean_best_error: mean(runs.iter().map(RunMetrics::best_test_error)),
                corrupted_fraction: mean(runs.iter().map(|r| r.mean_corrupted_fraction_from(0.0))),
                gate_on_fraction: (!gates.is_empty()).then(|| mean(gates.into_iter())),
            });
        }
    }

    write_summary(&rows, &out)?;
    write_table(&rows, &cells, variants, &out)?;
    let mut jsonl = std::fs::File::create(out.join("speedups.jsonl")).map_err(crate::Error::from)?;
    for r in &rows {
        writeln!(jsonl, "{}", serde_json::to_string(r).map_err(crate::Error::from)?).map_err(crate::Error::from)?;
    }
    print_table(&rows, &cells, variants);

    let diverged = results.iter().filter(|r| r.diverged()).count();
    if diverged > 0 {
        return Err(CliError::Diverged(diverged));
    }
    Ok(rows)
}

fn write_summary(rows: &[BenchmarkRow], out: &std::path::Path) -> crate::Result<()> {
    let mut w = csv::Writer::from_path(out.join("summary.csv"))?;
    w.write_record([
        "corruption",
        "fraction",
        "variant",
        "speedup",
        "best_error",
        "threshold_error",
        "baseline_backprops",
        "method_backprops",
        "corrupted_fraction",
        "gate_on_fraction",
    ])?;
    for r in rows {
        w.write_record([
            r.corruption.to_string(),
            r.fraction.to_string(),
            r.variant.clone(),
            r.report.speedup.map_or_else(|| "-".into(), |s| s.to_string()),
            r.mean_best_error.to_string(),
            r.report.threshold_error.to_string(),
            r.report.baseline_backprops.to_string(),
            r.report.method_backprops.map_or_else(|| "-".into(), |b| b.to_string()),
            r.corrupted_fraction.to_string(),
            r.gate_on_fraction.map_or_else(String::new, |g| g.to_string()),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn table_cells(rows: &[BenchmarkRow], cells: &[(CorruptionKind, f64)], variants: &[Variant]) -> Vec<Vec<String>> {
    variants
        .iter()
        .enumerate()
        .map(|(v, variant)| {
            std::iter::once(variant.name.clone())
                .chain((0..cells.len()).map(|c| {
                    let r = &rows[c * variants.len() + v];
                    format!("{} ({:.2}%)", r.report.speedup_label(), 100.0 * r.mean_best_error)
                }))
                .collect()
        })
        .collect()
}

fn header(cells: &[(CorruptionKind, f64)]) -> Vec<String> {
    std::iter::once("algorithm".to_string())
        .chain(cells.iter().map(|&(k, f)| format!("{k} {}%", (f * 100.0).round())))
        .collect()
}

/// Speedup and mean best error per variant (rows) and corruption cell
/// (columns).
fn write_table(
    rows: &[BenchmarkRow],
    cells: &[(CorruptionKind, f64)],
    variants: &[Variant],
    out: &std::path::Path,
) -> crate::Result<()> {
    let mut w = csv::Writer::from_path(out.join("table.csv"))?;
    w.write_record(header(cells))?;
    for line in table_cells(rows, cells, variants) {
        w.write_record(line)?;
    }
    w.flush()?;
    Ok(())
}

fn print_table(rows: &[BenchmarkRow], cells: &[(CorruptionKind, f64)], variants: &[Variant]) {
    let mut lines = vec![header(cells)];
    lines.extend(table_cells(rows, cells, variants));
    let widths: Vec<usize> = (0..lines[0].len())
        .map(|i| lines.iter().map(|l| l[i].len()).max().unwrap_or(0))
        .collect();
    for l in lines {
        let padded: Vec<String> = l.iter().zip(&widths).map(|(s, w)| format!("{s:<w$}")).collect();
        println!("{}", padded.join("  "));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slugs() {
        assert_eq!(slug("SB (50% selectivity)"), "sb-50-selectivity");
        assert_eq!(slug("Standard"), "standard");
    }
}
