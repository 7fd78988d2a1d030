//! Per-run measurements and their on-disk form.
//!
//! A run directory holds three files:
//!
//! - `metrics.csv`: `iteration,backprops,test_error,corrupted_frac_batch,gate_on`.
//!   Row `iteration = 0` is the evaluation before training; every other row
//!   is one back-propagated batch. `test_error` is filled only where an
//!   evaluation happened, `gate_on` only for VR runs.
//! - `picks.csv`: `id,picks`.
//! - `run.json`: seed and divergence status.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalPoint {
    pub iteration: u64,
    pub backprops: u64,
    pub test_error: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchRecord {
    pub iteration: u64,
    /// Cumulative examples back-propagated, this batch included.
    pub backprops: u64,
    pub corrupted_fraction: f64,
    pub gate_on: Option<bool>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunMetrics {
    pub seed: u64,
    pub eval_points: Vec<EvalPoint>,
    pub batches: Vec<BatchRecord>,
    pub pick_counts: BTreeMap<u64, u64>,
    /// Set when training stopped on a non-finite value.
    pub divergence: Option<String>,
}

impl RunMetrics {
    pub fn diverged(&self) -> bool {
        self.divergence.is_some()
    }

    pub fn best_test_error(&self) -> f64 {
        self.eval_points
            .iter()
            .map(|p| p.test_error)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn total_backprops(&self) -> u64 {
        self.batches.last().map_or(0, |b| b.backprops)
    }

    pub fn total_picks(&self) -> u64 {
        self.pick_counts.values().sum()
    }

    /// Fraction of VR rounds with importance sampling on; `None` for other
    /// strategies.
    pub fn gate_on_fraction(&self) -> Option<f64> {
        let gates: Vec<bool> = self.batches.iter().filter_map(|b| b.gate_on).collect();
        if gates.is_empty() {
            return None;
        }
        Some(gates.iter().filter(|&&g| g).count() as f64 / gates.len() as f64)
    }

    pub fn corrupted_fraction_series(&self) -> Vec<(u64, f64)> {
        self.batches
            .iter()
            .map(|b| (b.iteration, b.corrupted_fraction))
            .collect()
    }

    /// Mean corrupted fraction over the batches from `start` (a fraction of
    /// the run, by iteration) to the end.
    pub fn mean_corrupted_fraction_from(&self, start: f64) -> f64 {
        let skip = (self.batches.len() as f64 * start).floor() as usize;
        let tail = &self.batches[skip.min(self.batches.len())..];
        if tail.is_empty() {
            return 0.0;
        }
        tail.iter().map(|b| b.corrupted_fraction).sum::<f64>() / tail.len() as f64
    }

    pub fn eval_curve(&self) -> Vec<(u64, f64)> {
        self.eval_points
            .iter()
            .map(|p| (p.backprops, p.test_error))
            .collect()
    }

    pub fn write_metrics_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        let mut evals = self.eval_points.iter().peekable();
        let mut eval_at = |iteration: u64| -> Option<f64> {
            evals
                .next_if(|p| p.iteration == iteration)
                .map(|p| p.test_error)
        };
        // header even for an empty run
        w.write_record(["iteration", "backprops", "test_error", "corrupted_frac_batch", "gate_on"])?;
        if let Some(err) = eval_at(0) {
            w.serialize(MetricsRow {
                iteration: 0,
                backprops: 0,
                test_error: Some(err),
                corrupted_frac_batch: None,
                gate_on: None,
            })?;
        }
        for b in &self.batches {
            w.serialize(MetricsRow {
                iteration: b.iteration,
                backprops: b.backprops,
                test_error: eval_at(b.iteration),
                corrupted_frac_batch: Some(b.corrupted_fraction),
                gate_on: b.gate_on.map(u8::from),
            })?;
        }
        if let Some(p) = evals.next() {
            return Err(Error::format(
                "run metrics",
                format!("evaluation at iteration {} has no matching batch", p.iteration),
            ));
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_picks_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        w.write_record(["id", "picks"])?;
        for (&id, &picks) in &self.pick_counts {
            w.serialize(PickRow { id, picks })?;
        }
        w.flush()?;
        Ok(())
    }

    /// Rebuilds metrics from the two CSV streams; the seed and divergence
    /// status are not part of them.
    pub fn read_csv<R1: Read, R2: Read>(metrics: R1, picks: R2) -> Result<Self> {
        let mut m = RunMetrics::default();
        for row in csv::Reader::from_reader(metrics).deserialize() {
            let row: MetricsRow = row?;
            if let Some(test_error) = row.test_error {
                m.eval_points.push(EvalPoint {
                    iteration: row.iteration,
                    backprops: row.backprops,
                    test_error,
                });
            }
            if let Some(frac) = row.corrupted_frac_batch {
                let gate_on = match row.gate_on {
                    None => None,
                    Some(0) => Some(false),
                    Some(1) => Some(true),
                    Some(v) => {
                        return Err(Error::format("metrics csv", format!("gate_on value {v}")))
                    }
                };
                m.batches.push(BatchRecord {
                    iteration: row.iteration,
                    backprops: row.backprops,
                    corrupted_fraction: frac,
                    gate_on,
                });
            }
        }
        for row in csv::Reader::from_reader(picks).deserialize() {
            let row: PickRow = row?;
            m.pick_counts.insert(row.id, row.picks);
        }
        Ok(m)
    }

    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.write_metrics_csv(BufWriter::new(File::create(dir.join("metrics.csv"))?))?;
        self.write_picks_csv(BufWriter::new(File::create(dir.join("picks.csv"))?))?;
        let info = RunInfo {
            seed: self.seed,
            divergence: self.divergence.clone(),
        };
        let mut f = File::create(dir.join("run.json"))?;
        serde_json::to_writer(&mut f, &info)?;
        writeln!(f)?;
        Ok(())
    }

    pub fn read_dir(dir: &Path) -> Result<Self> {
        let mut m = RunMetrics::read_csv(
            File::open(dir.join("metrics.csv"))?,
            File::open(dir.join("picks.csv"))?,
        )?;
        let info: RunInfo = serde_json::from_reader(File::open(dir.join("run.json"))?)?;
        m.seed = info.seed;
        m.divergence = info.divergence;
        Ok(m)
    }
}

#[derive(Serialize, Deserialize)]
struct MetricsRow {
    iteration: u64,
    backprops: u64,
    test_error: Option<f64>,
    corrupted_frac_batch: Option<f64>,
    gate_on: Option<u8>,
}

#[derive(Serialize, Deserialize)]
struct PickRow {
    id: u64,
    picks: u64,
}

#[derive(Serialize, Deserialize)]
struct RunInfo {
    seed: u64,
    divergence: Option<String>,
}
