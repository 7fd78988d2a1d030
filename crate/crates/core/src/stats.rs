//! Significance tests used by the self-test and acceptance checks.

use statrs::distribution::{Binomial, ChiSquared, ContinuousCDF, DiscreteCDF};

/// Pearson chi-square statistic and p-value for observed counts against
/// expected probabilities.
pub fn chi_square_test(observed: &[u64], expected_probs: &[f64]) -> (f64, f64) {
    assert_eq!(observed.len(), expected_probs.len());
    assert!(observed.len() >= 2);
    let total: u64 = observed.iter().sum();
    let stat: f64 = observed
        .iter()
        .zip(expected_probs)
        .map(|(&o, &p)| {
            let e = p * total as f64;
            (o as f64 - e).powi(2) / e
        })
        .sum();
    let dist = ChiSquared::new((observed.len() - 1) as f64).expect("df >= 1");
    (stat, dist.sf(stat))
}

/// One-sided `P(X >= successes)` for `X ~ Binomial(trials, p)`.
pub fn binomial_upper_tail(successes: u64, trials: u64, p: f64) -> f64 {
    if successes == 0 {
        return 1.0;
    }
    let dist = Binomial::new(p, trials).expect("valid binomial");
    dist.sf(successes - 1)
}
