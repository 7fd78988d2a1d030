use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{Binomial, ChiSquared, ContinuousCDF, DiscreteCDF};

use lossprio::config::DatasetConfig;
use lossprio::dataset::{
    apply_corruption, gaussian_parameters, write_snapshot, CorruptionKind, CorruptionSpec, Example,
    SyntheticParams, SyntheticTask, Split,
};
use lossprio::harness::run_training;
use lossprio::model::{backward_and_update, softmax_in_place, Mlp, SgdState, TrainerConfig};
use lossprio::prioritizer::{
    make_prioritizer, sb_step, Candidate, CandidateBuffer, PrioritizerConfig, SamplingPool,
    ScoreHistogram,
};

fn chi2_p(counts: &[u64]) -> f64 {
    let n: u64 = counts.iter().sum();
    let e = n as f64 / counts.len() as f64;
    let stat: f64 = counts.iter().map(|&o| (o as f64 - e).powi(2) / e).sum();
    1.0 - ChiSquared::new((counts.len() - 1) as f64).unwrap().cdf(stat)
}

fn small_task(seed: u64) -> SyntheticTask {
    SyntheticTask::new(SyntheticParams {
        num_classes: 5,
        feature_dim: 12,
        seed,
        ..SyntheticParams::default()
    })
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn corruption_keeps_shape_and_ids(seed in 0u64..1000, frac in 0.0f64..=1.0, k in 0usize..4) {
        let kind = CorruptionKind::ALL[k];
        let clean = small_task(seed).sample(300, Split::Train).unwrap();
        let out = apply_corruption(&clean, &CorruptionSpec::new(kind, frac, seed + 1)).unwrap();
        prop_assert_eq!(out.len(), clean.len());
        prop_assert_eq!(out.num_classes(), clean.num_classes());
        prop_assert_eq!(out.feature_dim(), clean.feature_dim());
        for (a, b) in clean.examples().iter().zip(out.examples()) {
            prop_assert_eq!(a.id, b.id);
            prop_assert_eq!(b.features.len(), a.features.len());
        }
    }

    #[test]
    fn shuffled_examples_share_one_permutation(seed in 0u64..1000) {
        let clean = small_task(seed).sample(200, Split::Train).unwrap();
        let out = apply_corruption(&clean, &CorruptionSpec::new(CorruptionKind::ShuffledPixels, 0.5, seed)).unwrap();
        let d = clean.feature_dim();
        // recover the permutation from the first corrupted example with distinct features
        let mut perm: Option<Vec<usize>> = None;
        for (a, b) in clean.examples().iter().zip(out.examples()).filter(|(_, b)| b.corrupted()) {
            let mut x: Vec<u64> = a.features.iter().map(|f| f.to_bits()).collect();
            let mut y: Vec<u64> = b.features.iter().map(|f| f.to_bits()).collect();
            x.sort_unstable();
            y.sort_unstable();
            prop_assert_eq!(&x, &y);
            prop_assert_eq!(a.label, b.label);
            let p: Vec<usize> = (0..d)
                .map(|j| a.features.iter().position(|&f| f == b.features[j]).unwrap())
                .collect();
            match &perm {
                None => perm = Some(p),
                Some(q) => prop_assert_eq!(q, &p),
            }
        }
    }

    #[test]
    fn random_labels_keep_features(seed in 0u64..1000) {
        let clean = small_task(seed).sample(200, Split::Train).unwrap();
        let out = apply_corruption(&clean, &CorruptionSpec::new(CorruptionKind::RandomLabel, 0.7, seed)).unwrap();
        for (a, b) in clean.examples().iter().zip(out.examples()) {
            let fa: Vec<u64> = a.features.iter().map(|f| f.to_bits()).collect();
            let fb: Vec<u64> = b.features.iter().map(|f| f.to_bits()).collect();
            prop_assert_eq!(fa, fb);
        }
    }

    #[test]
    fn gaussian_parameters_are_source_moments(xs in prop::collection::vec(-10.0f64..10.0, 2..64)) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
        let (gm, gv) = gaussian_parameters(&xs);
        if xs.iter().all(|&x| x == xs[0]) {
            prop_assert_eq!((gm, gv), (xs[0], 0.0));
        } else {
            prop_assert_eq!((gm, gv), (m, v));
        }
    }

    #[test]
    fn softmax_is_a_simplex(mut z in prop::collection::vec(-700.0f64..700.0, 1..20)) {
        softmax_in_place(&mut z);
        prop_assert!(z.iter().all(|&p| (0.0..=1.0).contains(&p)));
        prop_assert!((z.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn beta_zero_batches_equal_uniform(losses in prop::collection::vec(0.0f64..5.0, 64..600), b in 1usize..40) {
        let mut uni = make_prioritizer(&PrioritizerConfig::uniform(), b).unwrap();
        let mut sb = make_prioritizer(&PrioritizerConfig::sb_loss(0.0).with_seed(3), b).unwrap();
        let mut out_u = Vec::new();
        let mut out_s = Vec::new();
        for (c, chunk) in losses.chunks_exact(b).enumerate() {
            let cands: Vec<Candidate> = chunk
                .iter()
                .enumerate()
                .map(|(i, &loss)| Candidate { id: (c * b + i) as u64, loss, probs: &[] })
                .collect();
            out_u.extend(uni.feed(&cands).unwrap().into_iter().map(|e| e.ids));
            out_s.extend(sb.feed(&cands).unwrap().into_iter().map(|e| e.ids));
        }
        prop_assert_eq!(out_u, out_s);
    }

    #[test]
    fn gate_statistic_zero_iff_constant(losses in prop::collection::vec(0.0f64..3.0, 1..50)) {
        let mut pool = SamplingPool::new(losses.len(), 0.0);
        for (i, &l) in losses.iter().enumerate() {
            pool.push(i as u64, l);
        }
        let constant = losses.iter().all(|&l| l == losses[0]);
        prop_assert_eq!(pool.gate_statistic() == 0.0, constant);
    }
}

#[test]
fn selectivity_for_beta_three() {
    let mut rng = ChaCha8Rng::seed_from_u64(30);
    let scored: Vec<(u64, f64)> = (0..100_000u64).map(|i| (i, rng.gen::<f64>())).collect();
    let mut hist = ScoreHistogram::new(1024);
    let mut buf = CandidateBuffer::new(128);
    let emitted: usize = sb_step(&scored, &mut hist, &mut buf, 3.0, &mut rng).iter().map(Vec::len).sum();
    let rate = (emitted + buf.len()) as f64 / scored.len() as f64;
    assert!((rate - 0.25).abs() <= 0.01, "rate {rate}");
}

#[test]
fn planted_high_scores_are_oversampled() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let f = 0.2;
    let mut planted = Vec::new();
    let scored: Vec<(u64, f64)> = (0..50_000u64)
        .map(|i| {
            let hot = rng.gen_bool(f);
            planted.push(hot);
            (i, if hot { rng.gen_range(0.5..1.5) } else { rng.gen_range(0.0..1.0) })
        })
        .collect();
    let mut hist = ScoreHistogram::new(1024);
    let mut buf = CandidateBuffer::new(64);
    let picked: Vec<u64> = sb_step(&scored, &mut hist, &mut buf, 1.0, &mut rng).concat();
    let k = picked.iter().filter(|&&id| planted[id as usize]).count() as u64;
    let n = picked.len() as u64;
    let p = Binomial::new(f, n).unwrap().sf(k - 1);
    assert!(k as f64 / n as f64 > f && p < 0.001, "{k}/{n}, p {p}");
}

#[test]
fn closed_gate_draws_uniformly() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let mut counts = vec![0u64; 6];
    for _ in 0..100_000 {
        let mut pool = SamplingPool::new(6, 0.0);
        for i in 0..6 {
            pool.push(i, 0.9);
        }
        let d = pool.draw(1, &mut rng);
        assert!(!d.gate_on);
        counts[d.ids[0] as usize] += 1;
    }
    assert!(chi2_p(&counts) > 0.01, "{counts:?}");
}

#[test]
fn separable_toy_task_converges() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let data: Vec<Example> = (0..256)
        .map(|i| {
            let label = i % 2;
            let side = if label == 1 { 1.0 } else { -1.0 };
            let x0 = side * rng.gen_range(0.5..2.0);
            Example::new(i as u64, vec![x0, rng.gen_range(-1.0..1.0)], label)
        })
        .collect();
    let all: Vec<&Example> = data.iter().collect();
    let cfg = TrainerConfig {
        batch_size: 32,
        ..TrainerConfig::default()
    };
    let mut model = Mlp::new(&[2, 8, 2], 34).unwrap();
    let mut state = SgdState::new(&model);
    for step in 0..500 {
        let batch: Vec<&Example> = (0..32).map(|j| all[(step * 32 + j) % all.len()]).collect();
        backward_and_update(&mut model, &batch, &cfg, &mut state, 0.0).unwrap();
    }
    let loss = model.mean_loss(&all).unwrap();
    assert!(loss < 0.1, "final loss {loss}");
}

#[test]
fn uniform_corrupted_fraction_is_unbiased() {
    let ds = DatasetConfig {
        n_train: 2048,
        n_test: 200,
        ..DatasetConfig::default()
    };
    let data = ds
        .load_corrupted(&CorruptionSpec::new(CorruptionKind::Gaussian, 0.3, 5))
        .unwrap();
    let trainer = TrainerConfig {
        total_epochs: 6,
        hidden_layers: vec![16],
        ..TrainerConfig::default()
    };
    let m = run_training(&data, &trainer, &PrioritizerConfig::uniform(), 4096).unwrap();
    let truth = data.train.corrupted_count() as f64 / data.train.len() as f64;
    // every epoch covers the same 2048 examples, so the average is exact
    assert!((m.mean_corrupted_fraction_from(0.0) - truth).abs() < 1e-12);
}

#[test]
fn dataset_pipeline_is_pure() {
    let snap = || {
        let ds = DatasetConfig::default();
        let data = ds
            .load_corrupted(&CorruptionSpec::new(CorruptionKind::ShuffledPixels, 0.4, 8))
            .unwrap();
        let mut buf = Vec::new();
        write_snapshot(&data.train, &mut buf).unwrap();
        let feats: Vec<u64> = data.train.examples().iter().flat_map(|e| e.features.iter().map(|f| f.to_bits())).collect();
        (buf, feats)
    };
    assert_eq!(snap(), snap());
}
