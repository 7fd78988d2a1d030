use serde::{Deserialize, Serialize};

use super::metrics::RunMetrics;
use crate::error::{Error, Result};

/// Backprops-to-threshold comparison of a method against standard training.
/// `method_backprops` and `speedup` are `None` (a dash) when the method never
/// reaches the threshold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpeedupReport {
    pub threshold_error: f64,
    pub baseline_backprops: u64,
    pub method_backprops: Option<u64>,
    pub speedup: Option<f64>,
    pub best_error: f64,
}

impl SpeedupReport {
    /// Single-line JSON, unreached values as `null`.
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }

    /// `2.0x`, or `-` when unreached.
    pub fn speedup_label(&self) -> String {
        self.speedup
            .map_or_else(|| "-".to_string(), |s| format!("{s:.1}x"))
    }
}

fn first_crossing(curve: &[(u64, f64)], threshold: f64) -> Option<u64> {
    curve.iter().find(|p| p.1 <= threshold).map(|p| p.0)
}

fn best(curve: &[(u64, f64)]) -> f64 {
    curve.iter().map(|p| p.1).fold(f64::INFINITY, f64::min)
}

/// Same as [`compute_speedup`] on raw `(backprops, test_error)` curves, e.g.
/// seed-averaged ones.
pub fn speedup_from_curves(
    baseline: &[(u64, f64)],
    method: &[(u64, f64)],
    slack: f64,
) -> Result<SpeedupReport> {
    if slack.is_nan() || slack <= 1.0 {
        return Err(Error::config(format!("speedup slack {slack} must exceed 1")));
    }
    if baseline.is_empty() || method.is_empty() {
        return Err(Error::config("speedup needs at least one evaluation per run"));
    }
    let threshold_error = slack * best(baseline);
    let baseline_backprops = first_crossing(baseline, threshold_error)
        .expect("baseline reaches slack times its own best error");
    let method_backprops = first_crossing(method, threshold_error);
    let speedup = method_backprops.map(|m| {
        if m == 0 {
            // both already below threshold before training
            if baseline_backprops == 0 {
                1.0
            } else {
                f64::INFINITY
            }
        } else {
            baseline_backprops as f64 / m as f64
        }
    });
    Ok(SpeedupReport {
        threshold_error,
        baseline_backprops,
        method_backprops,
        speedup,
        best_error: best(method),
    })
}

/// Threshold is `slack` times the baseline's best error; each run's crossing
/// point is its first evaluation at or below it, without interpolation.
pub fn compute_speedup(baseline: &RunMetrics, method: &RunMetrics, slack: f64) -> Result<SpeedupReport> {
    speedup_from_curves(&baseline.eval_curve(), &method.eval_curve(), slack)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(points: &[(u64, f64)]) -> Vec<(u64, f64)> {
        points.to_vec()
    }

    #[test]
    fn self_comparison_is_one() {
        let c = curve(&[(0, 0.9), (100, 0.3), (200, 0.12), (300, 0.1)]);
        let r = speedup_from_curves(&c, &c, 1.2).unwrap();
        assert_eq!(r.speedup, Some(1.0));
        assert!((r.threshold_error - 0.12).abs() < 1e-15);
        assert_eq!(r.best_error, 0.1);
    }

    #[test]
    fn ratio_definition() {
        let base = curve(&[(0, 0.9), (5_000, 0.5), (10_000, 0.11), (20_000, 0.1)]);
        let meth = curve(&[(0, 0.9), (5_000, 0.115), (10_000, 0.1)]);
        let r = speedup_from_curves(&base, &meth, 1.2).unwrap();
        assert_eq!(r.baseline_backprops, 10_000);
        assert_eq!(r.method_backprops, Some(5_000));
        assert_eq!(r.speedup, Some(2.0));
        assert_eq!(r.speedup_label(), "2.0x");
    }

    #[test]
    fn unreached_is_dash() {
        let base = curve(&[(0, 0.9), (100, 0.1)]);
        let meth = curve(&[(0, 0.9), (100, 0.3), (200, 0.2)]);
        let r = speedup_from_curves(&base, &meth, 1.2).unwrap();
        assert_eq!(r.method_backprops, None);
        assert_eq!(r.speedup, None);
        assert_eq!(r.speedup_label(), "-");
        let json = r.to_json_line();
        assert!(json.contains("\"speedup\":null"), "{json}");
        assert!(!json.contains('\n'));
    }

    #[test]
    fn invariant_under_points_after_crossing() {
        let base = curve(&[(0, 0.9), (100, 0.2), (200, 0.1)]);
        let meth = curve(&[(0, 0.9), (100, 0.11)]);
        let r1 = speedup_from_curves(&base, &meth, 1.2).unwrap();
        let mut longer = meth.clone();
        longer.extend([(200, 0.3), (300, 0.5)]);
        let r2 = speedup_from_curves(&base, &longer, 1.2).unwrap();
        assert_eq!(r1.speedup, r2.speedup);
        assert_eq!(r1.method_backprops, r2.method_backprops);
    }

    #[test]
    fn slack_must_exceed_one() {
        let c = curve(&[(0, 0.5)]);
        assert!(speedup_from_curves(&c, &c, 1.0).is_err());
    }
}
