//! Batch-selection strategies behind one interface: feed scored candidate
//! mini-batches in, take zero or more training batches out.
//!
//! - `uniform`: standard SGD, candidate batches pass through unchanged.
//! - `sb_loss`: Selective Backprop. Each candidate's loss goes into a sliding
//!   window; it is accepted with probability `cdf(loss)^beta` and queued
//!   until a full batch is ready.
//! - `sb_entropy`: the same machinery ranking by prediction entropy.
//! - `vr`: loss-proportional draws from a pre-sampling pool, falling back to
//!   uniform draws when the gate statistic is at or below the threshold.

mod buffer;
mod histogram;
mod pool;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::prediction_entropy;
use crate::rng;

pub use buffer::CandidateBuffer;
pub use histogram::{expected_selection_fraction, selection_probability, ScoreHistogram};
pub use pool::{PoolDraw, SamplingPool};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrioritizerKind {
    Uniform,
    SbLoss,
    SbEntropy,
    Vr,
}

impl PrioritizerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PrioritizerKind::Uniform => "uniform",
            PrioritizerKind::SbLoss => "sb_loss",
            PrioritizerKind::SbEntropy => "sb_entropy",
            PrioritizerKind::Vr => "vr",
        }
    }
}

impl std::fmt::Display for PrioritizerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for PrioritizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            PrioritizerKind::Uniform,
            PrioritizerKind::SbLoss,
            PrioritizerKind::SbEntropy,
            PrioritizerKind::Vr,
        ]
        .into_iter()
        .find(|k| k.as_str() == s)
        .ok_or_else(|| Error::config(format!("unknown prioritizer kind `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrioritizerConfig {
    pub kind: PrioritizerKind,
    pub beta: f64,
    pub histogram_capacity: usize,
    pub pool_capacity: usize,
    pub gate_threshold: f64,
    pub seed: u64,
}

impl Default for PrioritizerConfig {
    fn default() -> Self {
        PrioritizerConfig {
            kind: PrioritizerKind::Uniform,
            beta: 1.0,
            histogram_capacity: 1024,
            pool_capacity: 384,
            gate_threshold: 0.0,
            seed: 0,
        }
    }
}

impl PrioritizerConfig {
    pub fn uniform() -> Self {
        PrioritizerConfig::default()
    }

    pub fn sb_loss(beta: f64) -> Self {
        PrioritizerConfig {
            kind: PrioritizerKind::SbLoss,
            beta,
            ..PrioritizerConfig::default()
        }
    }

    pub fn sb_entropy(beta: f64) -> Self {
        PrioritizerConfig {
            kind: PrioritizerKind::SbEntropy,
            beta,
            ..PrioritizerConfig::default()
        }
    }

    /// VR with a pool of `pool_batches * batch_size`, i.e. at most
    /// `1 / pool_batches` selectivity.
    pub fn vr(pool_batches: usize, batch_size: usize) -> Self {
        PrioritizerConfig {
            kind: PrioritizerKind::Vr,
            pool_capacity: pool_batches * batch_size,
            ..PrioritizerConfig::default()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self, batch_size: usize) -> Result<()> {
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(Error::config("prioritizer.beta must be a finite value >= 0"));
        }
        if !(self.gate_threshold.is_finite() && self.gate_threshold >= 0.0) {
            return Err(Error::config("prioritizer.gate_threshold must be >= 0"));
        }
        match self.kind {
            PrioritizerKind::SbLoss | PrioritizerKind::SbEntropy
                if self.histogram_capacity < batch_size =>
            {
                Err(Error::config(format!(
                    "prioritizer.histogram_capacity {} is smaller than batch size {batch_size}",
                    self.histogram_capacity
                )))
            }
            PrioritizerKind::Vr if self.pool_capacity < batch_size => Err(Error::config(format!(
                "prioritizer.pool_capacity {} is smaller than batch size {batch_size}",
                self.pool_capacity
            ))),
            _ => Ok(()),
        }
    }
}

/// One scored candidate: its id, loss, and softmax output.
#[derive(Clone, Copy, Debug)]
pub struct Candidate<'a> {
    pub id: u64,
    pub loss: f64,
    pub probs: &'a [f64],
}

/// A batch to back-propagate. `gate_on` is set by VR only.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EmittedBatch {
    pub ids: Vec<u64>,
    pub gate_on: Option<bool>,
}

/// Debug view of a prioritizer's internal state.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PrioritizerSnapshot {
    pub kind: Option<PrioritizerKind>,
    pub window: Vec<f64>,
    pub buffer: Vec<u64>,
    pub pool: Vec<(u64, f64)>,
    pub gate_on: Option<bool>,
    pub ingested: u64,
    pub emitted: u64,
}

impl PrioritizerSnapshot {
    /// Single-line JSON record.
    pub fn to_text(&self) -> String {
        serde_json::to_string(self).expect("snapshot serializes")
    }
}

pub trait Prioritizer: Send {
    fn kind(&self) -> PrioritizerKind;

    /// Feeds one candidate mini-batch and returns every training batch that
    /// became ready.
    fn feed(&mut self, candidates: &[Candidate<'_>]) -> Result<Vec<EmittedBatch>>;

    fn snapshot(&self) -> PrioritizerSnapshot;
}

fn check_score(id: u64, score: f64) -> Result<()> {
    if score.is_finite() && score >= 0.0 {
        Ok(())
    } else {
        Err(Error::Numerical(format!(
            "example {id} has invalid priority score {score}"
        )))
    }
}

/// Standard SGD.
#[derive(Debug, Default)]
pub struct UniformPrioritizer {
    ingested: u64,
    emitted: u64,
}

impl Prioritizer for UniformPrioritizer {
    fn kind(&self) -> PrioritizerKind {
        PrioritizerKind::Uniform
    }

    fn feed(&mut self, candidates: &[Candidate<'_>]) -> Result<Vec<EmittedBatch>> {
        self.ingested += candidates.len() as u64;
        if candidates.is_empty() {
            return Ok(Vec::new());
        }
        self.emitted += candidates.len() as u64;
        Ok(vec![EmittedBatch {
            ids: candidates.iter().map(|c| c.id).collect(),
            gate_on: None,
        }])
    }

    fn snapshot(&self) -> PrioritizerSnapshot {
        PrioritizerSnapshot {
            kind: Some(PrioritizerKind::Uniform),
            ingested: self.ingested,
            emitted: self.emitted,
            ..Default::default()
        }
    }
}

/// One Selective Backprop pass over scored examples.
///
/// Each score is inserted into the window before its own CDF is queried.
/// While the window holds fewer than one batch of scores every example is
/// accepted.
pub fn sb_step<R: Rng + ?Sized>(
    scored: &[(u64, f64)],
    hist: &mut ScoreHistogram,
    buf: &mut CandidateBuffer,
    beta: f64,
    rng: &mut R,
) -> Vec<Vec<u64>> {
    let mut batches = Vec::new();
    for &(id, score) in scored {
        hist.insert(score);
        let accept = if hist.len() < buf.batch_size() {
            true
        } else {
            let p = selection_probability(score, hist, beta).unwrap_or(1.0);
            p >= 1.0 || rng.gen::<f64>() < p
        };
        if accept {
            buf.push(id);
            if let Some(b) = buf.pop_batch() {
                batches.push(b);
            }
        }
    }
    batches
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Score {
    Loss,
    Entropy,
}

/// Selective Backprop on loss (`sb_loss`) or prediction entropy
/// (`sb_entropy`).
#[derive(Debug)]
pub struct SelectiveBackprop {
    score: Score,
    beta: f64,
    hist: ScoreHistogram,
    buf: CandidateBuffer,
    rng: ChaCha8Rng,
    scratch: Vec<(u64, f64)>,
    ingested: u64,
    emitted: u64,
}

impl SelectiveBackprop {
    fn new(cfg: &PrioritizerConfig, batch_size: usize, score: Score) -> Self {
        SelectiveBackprop {
            score,
            beta: cfg.beta,
            hist: ScoreHistogram::new(cfg.histogram_capacity),
            buf: CandidateBuffer::new(batch_size),
            rng: rng::stream(cfg.seed, "prioritizer"),
            scratch: Vec::new(),
            ingested: 0,
            emitted: 0,
        }
    }
}

impl Prioritizer for SelectiveBackprop {
    fn kind(&self) -> PrioritizerKind {
        match self.score {
            Score::Loss => PrioritizerKind::SbLoss,
            Score::Entropy => PrioritizerKind::SbEntropy,
        }
    }

    fn feed(&mut self, candidates: &[Candidate<'_>]) -> Result<Vec<EmittedBatch>> {
        self.scratch.clear();
        for c in candidates {
            let s = match self.score {
                Score::Loss => c.loss,
                Score::Entropy => prediction_entropy(c.probs)?,
            };
            check_score(c.id, s)?;
            self.scratch.push((c.id, s));
        }
        self.ingested += candidates.len() as u64;
        let batches = sb_step(
            &self.scratch,
            &mut self.hist,
            &mut self.buf,
            self.beta,
            &mut self.rng,
        );
        self.emitted += batches.iter().map(|b| b.len() as u64).sum::<u64>();
        Ok(batches
            .into_iter()
            .map(|ids| EmittedBatch { ids, gate_on: None })
            .collect())
    }

    fn snapshot(&self) -> PrioritizerSnapshot {
        PrioritizerSnapshot {
            kind: Some(self.kind()),
            window: self.hist.window().collect(),
            buffer: self.buf.pending().collect(),
            ingested: self.ingested,
            emitted: self.emitted,
            ..Default::default()
        }
    }
}

/// Pushes scored pairs into the pool, drawing a batch each time it fills.
pub fn vr_step<R: Rng + ?Sized>(
    pool: &mut SamplingPool,
    incoming: &[(u64, f64)],
    batch_size: usize,
    rng: &mut R,
) -> Vec<PoolDraw> {
    let mut draws = Vec::new();
    for &(id, loss) in incoming {
        pool.push(id, loss);
        if pool.is_full() {
            draws.push(pool.draw(batch_size, rng));
        }
    }
    draws
}

/// Loss-proportional importance sampling without gradient re-weighting.
#[derive(Debug)]
pub struct VarianceReduction {
    pool: SamplingPool,
    batch_size: usize,
    rng: ChaCha8Rng,
    last_gate: Option<bool>,
    scratch: Vec<(u64, f64)>,
    ingested: u64,
    emitted: u64,
}

impl Prioritizer for VarianceReduction {
    fn kind(&self) -> PrioritizerKind {
        PrioritizerKind::Vr
    }

    fn feed(&mut self, candidates: &[Candidate<'_>]) -> Result<Vec<EmittedBatch>> {
        self.scratch.clear();
        for c in candidates {
            check_score(c.id, c.loss)?;
            self.scratch.push((c.id, c.loss));
        }
        self.ingested += candidates.len() as u64;
        let draws = vr_step(&mut self.pool, &self.scratch, self.batch_size, &mut self.rng);
        Ok(draws
            .into_iter()
            .map(|d| {
                self.last_gate = Some(d.gate_on);
                self.emitted += d.ids.len() as u64;
                EmittedBatch {
                    ids: d.ids,
                    gate_on: Some(d.gate_on),
                }
            })
            .collect())
    }

    fn snapshot(&self) -> PrioritizerSnapshot {
        PrioritizerSnapshot {
            kind: Some(PrioritizerKind::Vr),
            pool: self.pool.entries().to_vec(),
            gate_on: self.last_gate,
            ingested: self.ingested,
            emitted: self.emitted,
            ..Default::default()
        }
    }
}

pub fn make_prioritizer(cfg: &PrioritizerConfig, batch_size: usize) -> Result<Box<dyn Prioritizer>> {
    cfg.validate(batch_size)?;
    if batch_size == 0 {
        return Err(Error::config("batch size must be positive"));
    }
    Ok(match cfg.kind {
        PrioritizerKind::Uniform => Box::new(UniformPrioritizer::default()),
        PrioritizerKind::SbLoss => Box::new(SelectiveBackprop::new(cfg, batch_size, Score::Loss)),
        PrioritizerKind::SbEntropy => {
            Box::new(SelectiveBackprop::new(cfg, batch_size, Score::Entropy))
        }
        PrioritizerKind::Vr => Box::new(VarianceReduction {
            pool: SamplingPool::new(cfg.pool_capacity, cfg.gate_threshold),
            batch_size,
            rng: rng::stream(cfg.seed, "prioritizer"),
            last_gate: None,
            scratch: Vec::new(),
            ingested: 0,
            emitted: 0,
        }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashSet;

    const UNIFORM_PROBS: [f64; 2] = [0.5, 0.5];

    fn candidates(scores: &[(u64, f64)]) -> Vec<Candidate<'static>> {
        scores
            .iter()
            .map(|&(id, loss)| Candidate {
                id,
                loss,
                probs: &UNIFORM_PROBS,
            })
            .collect()
    }

    #[test]
    fn beta_zero_is_sgd() {
        let mut hist = ScoreHistogram::new(16);
        let mut buf = CandidateBuffer::new(4);
        let mut r = rng::stream(0, "t");
        let scored: Vec<(u64, f64)> = (0..8).map(|i| (i, (i as f64 * 0.37).sin().abs())).collect();
        let out = sb_step(&scored, &mut hist, &mut buf, 0.0, &mut r);
        assert_eq!(out, vec![vec![0, 1, 2, 3], vec![4, 5, 6, 7]]);
    }

    #[test]
    fn constant_scores_accept_everything() {
        let mut hist = ScoreHistogram::new(64);
        let mut buf = CandidateBuffer::new(8);
        let mut r = rng::stream(0, "t");
        let scored: Vec<(u64, f64)> = (0..4000).map(|i| (i, 0.7)).collect();
        for beta in [1.0, 3.0] {
            let out = sb_step(&scored, &mut hist, &mut buf, beta, &mut r);
            assert_eq!(out.len(), 500);
        }
    }

    #[test]
    fn uniform_passes_through() {
        let mut p = make_prioritizer(&PrioritizerConfig::uniform(), 3).unwrap();
        let c = candidates(&[(5, 1.0), (2, 0.1), (9, 3.0)]);
        let out = p.feed(&c).unwrap();
        assert_eq!(out, vec![EmittedBatch { ids: vec![5, 2, 9], gate_on: None }]);
    }

    #[test]
    fn entropy_ignores_loss() {
        let cfg = PrioritizerConfig {
            histogram_capacity: 16,
            ..PrioritizerConfig::sb_entropy(1.0)
        };
        let mut p = make_prioritizer(&cfg, 2).unwrap();
        let sharp = [1.0, 0.0];
        let c = [
            Candidate { id: 0, loss: 50.0, probs: &sharp },
            Candidate { id: 1, loss: f64::NAN, probs: &UNIFORM_PROBS },
        ];
        // a NaN loss would be rejected if SBE looked at it
        p.feed(&c).unwrap();
        let snap = p.snapshot();
        assert_eq!(snap.window, vec![0.0, std::f64::consts::LN_2]);
    }

    #[test]
    fn rejects_invalid_scores_and_config() {
        let mut p = make_prioritizer(&PrioritizerConfig::sb_loss(1.0), 4).unwrap();
        assert!(p.feed(&candidates(&[(0, f64::INFINITY)])).is_err());
        assert!(p.feed(&candidates(&[(0, -1.0)])).is_err());
        let bad = PrioritizerConfig { beta: -1.0, ..PrioritizerConfig::sb_loss(1.0) };
        assert!(make_prioritizer(&bad, 4).is_err());
        let small = PrioritizerConfig { pool_capacity: 2, ..PrioritizerConfig::vr(1, 4) };
        assert!(make_prioritizer(&small, 4).is_err());
        assert!("sb_lol".parse::<PrioritizerKind>().is_err());
    }

    #[test]
    fn vr_selectivity_is_one_over_pool_batches() {
        for c in [2usize, 3] {
            let b = 16;
            let mut p = make_prioritizer(&PrioritizerConfig::vr(c, b).with_seed(1), b).unwrap();
            let mut emitted = 0;
            let rounds = 300;
            for r in 0..rounds {
                let scored: Vec<(u64, f64)> =
                    (0..b as u64).map(|i| (r * 100 + i, 0.1 + (i as f64))).collect();
                for batch in p.feed(&candidates(&scored)).unwrap() {
                    assert_eq!(batch.ids.len(), b);
                    assert_eq!(batch.gate_on, Some(true));
                    emitted += batch.ids.len();
                }
            }
            let ratio = emitted as f64 / (rounds as usize * b) as f64;
            assert!((ratio - 1.0 / c as f64).abs() < 0.01, "c={c}: {ratio}");
        }
    }

    #[test]
    fn snapshot_text_is_single_line_json() {
        let mut p = make_prioritizer(&PrioritizerConfig::vr(3, 2), 2).unwrap();
        p.feed(&candidates(&[(1, 0.5), (2, 0.25)])).unwrap();
        let text = p.snapshot().to_text();
        assert!(!text.contains('\n'));
        let back: PrioritizerSnapshot = serde_json::from_str(&text).unwrap();
        assert_eq!(back.pool, vec![(1, 0.5), (2, 0.25)]);
        assert_eq!(back.kind, Some(PrioritizerKind::Vr));
    }

    fn kind_strategy() -> impl Strategy<Value = PrioritizerKind> {
        prop_oneof![
            Just(PrioritizerKind::Uniform),
            Just(PrioritizerKind::SbLoss),
            Just(PrioritizerKind::SbEntropy),
            Just(PrioritizerKind::Vr),
        ]
    }

    proptest! {
        #[test]
        fn emits_only_fed_ids_in_full_batches(
            kind in kind_strategy(),
            beta in 0.0f64..3.0,
            seed in any::<u64>(),
            losses in prop::collection::vec(0.0f64..5.0, 8..300),
        ) {
            let b = 8;
            let cfg = PrioritizerConfig {
                kind,
                beta,
                histogram_capacity: 32,
                pool_capacity: 24,
                seed,
                ..PrioritizerConfig::default()
            };
            let mut p = make_prioritizer(&cfg, b).unwrap();
            let probs = [0.2, 0.3, 0.5];
            let mut fed = HashSet::new();
            let mut seen = HashSet::new();
            for (chunk_no, chunk) in losses.chunks_exact(b).enumerate() {
                let cands: Vec<Candidate> = chunk
                    .iter()
                    .enumerate()
                    .map(|(i, &loss)| Candidate { id: (chunk_no * b + i) as u64, loss, probs: &probs })
                    .collect();
                fed.extend(cands.iter().map(|c| c.id));
                for batch in p.feed(&cands).unwrap() {
                    prop_assert_eq!(batch.ids.len(), b);
                    for id in batch.ids {
                        prop_assert!(fed.contains(&id));
                        prop_assert!(seen.insert(id), "id {} emitted twice", id);
                    }
                }
            }
        }
    }
}
