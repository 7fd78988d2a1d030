use rand::seq::index;

use super::Mlp;
use crate::dataset::Example;
use crate::error::{Error, Result};
use crate::rng;

/// Coordinates checked when the caller does not choose.
pub const DEFAULT_CHECKED_COORDS: usize = 256;

// Below this magnitude both gradients count as zero and the absolute
// difference is reported instead.
const ZERO_FLOOR: f64 = 1e-8;

/// Largest relative error between the analytic loss gradient and central
/// finite differences, over a random subset of parameters.
///
/// Only the data loss is checked; weight decay is an optimizer term and is
/// not part of `loss_and_gradient`.
pub fn gradient_check(model: &Mlp, batch: &[&Example], epsilon: f64) -> Result<f64> {
    gradient_check_coords(model, batch, epsilon, DEFAULT_CHECKED_COORDS, 0)
}

pub fn gradient_check_coords(
    model: &Mlp,
    batch: &[&Example],
    epsilon: f64,
    max_coords: usize,
    seed: u64,
) -> Result<f64> {
    if !(1e-6..=1e-3).contains(&epsilon) {
        return Err(Error::config(format!(
            "finite-difference epsilon {epsilon} outside [1e-6, 1e-3]"
        )));
    }
    let (_, analytic) = model.loss_and_gradient(batch)?;
    let n = analytic.len();
    let coords = if max_coords >= n {
        (0..n).collect::<Vec<_>>()
    } else {
        let mut c = index::sample(&mut rng::stream(seed, "gradcheck"), n, max_coords).into_vec();
        c.sort_unstable();
        c
    };

    let mut probe = model.clone();
    let mut worst = 0.0f64;
    for i in coords {
        let orig = probe.params()[i];
        probe.params_mut()[i] = orig + epsilon;
        let plus = probe.mean_loss(batch)?;
        probe.params_mut()[i] = orig - epsilon;
        let minus = probe.mean_loss(batch)?;
        probe.params_mut()[i] = orig;

        let numeric = (plus - minus) / (2.0 * epsilon);
        let a = analytic[i];
        let scale = a.abs().max(numeric.abs()).max(ZERO_FLOOR);
        worst = worst.max((a - numeric).abs() / scale);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_batch(dim: usize, k: usize, n: usize, seed: u64) -> Vec<Example> {
        let mut r = rng::stream(seed, "batch");
        (0..n)
            .map(|i| {
                Example::new(
                    i as u64,
                    (0..dim).map(|_| r.gen_range(-1.0..1.0)).collect(),
                    r.gen_range(0..k),
                )
            })
            .collect()
    }

    #[test]
    fn small_random_net() {
        let m = Mlp::new(&[8, 16, 4], 3).unwrap();
        let batch = random_batch(8, 4, 8, 1);
        let refs: Vec<&Example> = batch.iter().collect();
        let err = gradient_check(&m, &refs, 1e-4).unwrap();
        assert!(err < 1e-4, "max relative error {err}");
    }

    #[test]
    fn deeper_net() {
        let m = Mlp::new(&[5, 7, 6, 3], 9).unwrap();
        let batch = random_batch(5, 3, 6, 2);
        let refs: Vec<&Example> = batch.iter().collect();
        assert!(gradient_check(&m, &refs, 1e-5).unwrap() < 1e-4);
    }

    #[test]
    fn linear_model_is_tight() {
        let m = Mlp::new(&[6, 4], 11).unwrap();
        let batch = random_batch(6, 4, 5, 3);
        let refs: Vec<&Example> = batch.iter().collect();
        let err = gradient_check(&m, &refs, 1e-4).unwrap();
        assert!(err < 1e-7, "max relative error {err}");
    }

    #[test]
    fn subset_and_bad_epsilon() {
        let m = Mlp::new(&[8, 16, 4], 3).unwrap();
        let batch = random_batch(8, 4, 4, 1);
        let refs: Vec<&Example> = batch.iter().collect();
        assert!(gradient_check_coords(&m, &refs, 1e-4, 20, 5).unwrap() < 1e-4);
        assert!(gradient_check(&m, &refs, 0.1).is_err());
    }
}
