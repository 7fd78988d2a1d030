use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::CliError;
use crate::dataset::{
    apply_corruption, generate_synthetic, CorruptionKind, CorruptionSpec, DatasetPair, Split,
    SyntheticParams, SyntheticTask,
};
use crate::harness::run_training;
use crate::model::{gradient_check, Mlp, TrainerConfig};
use crate::prioritizer::{
    expected_selection_fraction, sb_step, CandidateBuffer, PrioritizerConfig, SamplingPool,
    ScoreHistogram,
};
use crate::stats::chi_square_test;

#[derive(Clone, Debug)]
pub struct PropertyResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl PropertyResult {
    fn new(name: impl Into<String>, passed: bool, detail: String) -> Self {
        Self {
            name: name.into(),
            passed,
            detail,
        }
    }
}

fn sb_accept_fraction(scores: &[f64], beta: f64, seed: u64) -> f64 {
    let mut hist = ScoreHistogram::new(1024);
    let mut buf = CandidateBuffer::new(128);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scored: Vec<(u64, f64)> = scores.iter().enumerate().map(|(i, &s)| (i as u64, s)).collect();
    let emitted: usize = sb_step(&scored, &mut hist, &mut buf, beta, &mut rng)
        .iter()
        .map(Vec::len)
        .sum();
    (emitted + buf.len()) as f64 / scores.len() as f64
}

fn selectivity() -> Vec<PropertyResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let scores: Vec<f64> = (0..100_000).map(|_| rng.gen::<f64>()).collect();
    [0.0, 1.0, 2.0]
        .iter()
        .map(|&beta| {
            let got = sb_accept_fraction(&scores, beta, 12);
            let want = expected_selection_fraction(beta);
            PropertyResult::new(
                format!("sb selectivity beta={beta}"),
                (got - want).abs() <= 0.01,
                format!("measured {got:.4}, expected {want:.4}"),
            )
        })
        .collect()
}

fn constant_scores() -> PropertyResult {
    let got = sb_accept_fraction(&vec![0.7; 5000], 2.0, 13);
    PropertyResult::new(
        "sb constant scores all selected",
        got == 1.0,
        format!("accepted fraction {got}"),
    )
}

fn gradients() -> PropertyResult {
    let data = generate_synthetic(8, 4, 8, 3).expect("valid synthetic shape");
    let model = Mlp::new(&[8, 16, 4], 4).expect("valid widths");
    let batch: Vec<_> = data.examples().iter().collect();
    match gradient_check(&model, &batch, 1e-5) {
        Ok(err) => PropertyResult::new(
            "gradient check [8,16,4]",
            err < 1e-4,
            format!("max relative error {err:.2e}"),
        ),
        Err(e) => PropertyResult::new("gradient check [8,16,4]", false, e.to_string()),
    }
}

fn vr_gate() -> Vec<PropertyResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let losses = [4.0, 1.0];
    let trials = 100_000;
    let mut first = 0u64;
    for _ in 0..trials {
        let mut pool = SamplingPool::new(2, 0.0);
        pool.push(0, losses[0]);
        pool.push(1, losses[1]);
        if pool.draw(1, &mut rng).ids[0] == 0 {
            first += 1;
        }
    }
    let share = first as f64 / trials as f64;

    let weights = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
    let total: f64 = weights.iter().sum();
    let probs: Vec<f64> = weights.iter().map(|w| w / total).collect();
    let mut counts = vec![0u64; weights.len()];
    for _ in 0..60_000 {
        let mut pool = SamplingPool::new(weights.len(), 0.0);
        for (i, &w) in weights.iter().enumerate() {
            pool.push(i as u64, w);
        }
        counts[pool.draw(1, &mut rng).ids[0] as usize] += 1;
    }
    let (stat, p) = chi_square_test(&counts, &probs);

    let mut flat = SamplingPool::new(4, 0.0);
    for i in 0..4 {
        flat.push(i, 2.5);
    }
    let flat_draw = flat.draw(2, &mut rng);

    vec![
        PropertyResult::new(
            "vr 4:1 loss ratio",
            (share - 0.8).abs() <= 0.01,
            format!("heavier example drawn {share:.4}, expected 0.8"),
        ),
        PropertyResult::new(
            "vr proportional draw chi-square",
            p > 0.01,
            format!("chi2 {stat:.2}, p {p:.3}"),
        ),
        PropertyResult::new(
            "vr gate off on equal losses",
            !flat_draw.gate_on && flat_draw.gate_statistic == 0.0,
            format!("gate statistic {}", flat_draw.gate_statistic),
        ),
    ]
}

fn corruption() -> Vec<PropertyResult> {
    let params = SyntheticParams {
        seed: 5,
        ..SyntheticParams::default()
    };
    let task = SyntheticTask::new(params).expect("default params are valid");
    let clean = task.sample(2000, Split::Train).expect("sampling succeeds");
    CorruptionKind::ALL[1..]
        .iter()
        .map(|&kind| {
            let spec = CorruptionSpec::new(kind, 0.3, 9);
            let name = format!("corruption {kind}");
            let out = match apply_corruption(&clean, &spec) {
                Ok(d) => d,
                Err(e) => return PropertyResult::new(name, false, e.to_string()),
            };
            let count = out.corrupted_count();
            let mut ok = count == 600 && out.len() == clean.len();
            for (a, b) in clean.examples().iter().zip(out.examples()) {
                ok &= a.id == b.id && b.label < out.num_classes();
                if !b.corrupted() {
                    ok &= a.features == b.features && a.label == b.label;
                } else if kind == CorruptionKind::ShuffledPixels {
                    let mut x = a.features.clone();
                    let mut y = b.features.clone();
                    x.sort_by(f64::total_cmp);
                    y.sort_by(f64::total_cmp);
                    ok &= x == y && a.label == b.label;
                } else if kind == CorruptionKind::Gaussian {
                    ok &= a.label == b.label;
                }
            }
            PropertyResult::new(name, ok, format!("{count} of {} corrupted", out.len()))
        })
        .collect()
}

fn sgd_equivalence() -> PropertyResult {
    let task = SyntheticTask::new(SyntheticParams {
        seed: 6,
        ..SyntheticParams::default()
    })
    .expect("default params are valid");
    let data: DatasetPair = task.sample_pair(512, 256).expect("sampling succeeds");
    let trainer = TrainerConfig {
        batch_size: 32,
        total_epochs: 2,
        hidden_layers: vec![16],
        seed: 7,
        ..TrainerConfig::default()
    };
    let a = run_training(&data, &trainer, &PrioritizerConfig::uniform().with_seed(7), 64);
    let b = run_training(&data, &trainer, &PrioritizerConfig::sb_loss(0.0).with_seed(7), 64);
    let name = "sb beta=0 matches standard sgd";
    match (a, b) {
        (Ok(a), Ok(b)) => PropertyResult::new(
            name,
            a.eval_points == b.eval_points,
            format!(
                "final errors {:.4} / {:.4}",
                a.eval_points.last().map_or(f64::NAN, |p| p.test_error),
                b.eval_points.last().map_or(f64::NAN, |p| p.test_error)
            ),
        ),
        (Err(e), _) | (_, Err(e)) => PropertyResult::new(name, false, e.to_string()),
    }
}

/// Runs every self-check and returns the individual results.
pub fn run_selftest() -> Vec<PropertyResult> {
    let mut out = selectivity();
    out.push(constant_scores());
    out.push(gradients());
    out.extend(vr_gate());
    out.extend(corruption());
    out.push(sgd_equivalence());
    out
}

pub fn cmd_selftest() -> Result<(), CliError> {
    let results = run_selftest();
    for r in &results {
        println!("{} {:<36} {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    if failed > 0 {
        return Err(crate::Error::Numerical(format!("{failed} self-check(s) failed")).into());
    }
    Ok(())
}
