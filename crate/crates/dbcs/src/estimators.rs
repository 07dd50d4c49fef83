//! Per-record inverse-propensity point estimates and variance-bound terms,
//! with and without proxy outcomes, plus the per-step panel aggregation.

use crate::error::{DbcsError, Result};
use crate::stream::Observation;

/// A per-record point estimate together with its variance-bound term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatePair {
    pub tau_hat: f64,
    pub sigma2_hat: f64,
}

fn ipw_of(outcome: f64, arm: u8, p1: f64) -> EstimatePair {
    let (tau_hat, sigma2_hat) = if arm == 1 {
        (outcome / p1, outcome * outcome / (p1 * p1))
    } else {
        let p0 = 1.0 - p1;
        (-outcome / p0, outcome * outcome / (p0 * p0))
    };
    EstimatePair { tau_hat, sigma2_hat }
}

/// IPW estimate of the individual treatment effect and its variance bound.
///
/// tau_hat = 1{W=1} Y / p1 - 1{W=0} Y / (1 - p1)
/// sigma2_hat = 1{W=1} Y^2 / p1^2 + 1{W=0} Y^2 / (1 - p1)^2
pub fn ipw_estimate(obs: &Observation) -> Result<EstimatePair> {
    obs.validate()?;
    Ok(ipw_of(obs.outcome, obs.arm, obs.p1))
}

/// Same formulas applied to the residual Y - Yhat. Unbiased for the same
/// estimand; the variance term shrinks with the prediction quality.
pub fn proxy_estimate(obs: &Observation) -> Result<EstimatePair> {
    obs.validate()?;
    let yhat = obs.prediction.ok_or(DbcsError::MissingPrediction)?;
    Ok(ipw_of(obs.outcome - yhat, obs.arm, obs.p1))
}

/// Aggregate the n per-unit estimates observed at one panel time step:
/// mean of the point estimates, sum of the variance terms. The sum (not the
/// mean) is what makes the stacked width scale with 1/(t n).
pub fn panel_aggregate(pairs: &[EstimatePair]) -> Result<EstimatePair> {
    if pairs.is_empty() {
        return Err(DbcsError::EmptyBatch);
    }
    let n = pairs.len() as f64;
    let mut sum_tau = 0.0;
    let mut sum_var = 0.0;
    for p in pairs {
        sum_tau += p.tau_hat;
        sum_var += p.sigma2_hat;
    }
    Ok(EstimatePair {
        tau_hat: sum_tau / n,
        sigma2_hat: sum_var,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obs(arm: u8, outcome: f64, p1: f64, prediction: Option<f64>) -> Observation {
        Observation {
            unit_id: 0,
            time: 1,
            arm,
            outcome,
            p1,
            prediction,
        }
    }

    #[test]
    fn ipw_direct_substitution() {
        let e = ipw_estimate(&obs(1, 1.0, 0.5, None)).unwrap();
        assert_eq!(e.tau_hat, 2.0);
        assert_eq!(e.sigma2_hat, 4.0);

        let e = ipw_estimate(&obs(0, 1.0, 0.5, None)).unwrap();
        assert_eq!(e.tau_hat, -2.0);
        assert_eq!(e.sigma2_hat, 4.0);
    }

    #[test]
    fn ipw_derived_value() {
        // 0.7 / 0.2 = 3.5; 0.49 / 0.04 = 12.25
        let e = ipw_estimate(&obs(1, 0.7, 0.2, None)).unwrap();
        assert!((e.tau_hat - 3.5).abs() < 1e-12);
        assert!((e.sigma2_hat - 12.25).abs() < 1e-12);
    }

    #[test]
    fn ipw_rejects_bad_p1() {
        assert!(ipw_estimate(&obs(1, 1.0, 0.0, None)).is_err());
        assert!(ipw_estimate(&obs(1, 1.0, 1.0, None)).is_err());
        assert!(ipw_estimate(&obs(1, 1.0, -0.2, None)).is_err());
    }

    #[test]
    fn proxy_zero_prediction_reduces_to_ipw() {
        let e = proxy_estimate(&obs(1, 1.0, 0.5, Some(0.0))).unwrap();
        assert_eq!(e.tau_hat, 2.0);
        assert_eq!(e.sigma2_hat, 4.0);
    }

    #[test]
    fn proxy_perfect_prediction() {
        let e = proxy_estimate(&obs(1, 1.0, 0.5, Some(1.0))).unwrap();
        assert_eq!(e.tau_hat, 0.0);
        assert_eq!(e.sigma2_hat, 0.0);
    }

    #[test]
    fn proxy_derived_value() {
        // residual 5.0, control arm: -5/0.6 and 25/0.36
        let e = proxy_estimate(&obs(0, 25.0, 0.4, Some(20.0))).unwrap();
        assert!((e.tau_hat - (-8.3333333333333339)).abs() < 1e-7);
        assert!((e.sigma2_hat - 69.444444444444443).abs() < 1e-6);
    }

    #[test]
    fn proxy_requires_prediction() {
        assert!(matches!(
            proxy_estimate(&obs(1, 1.0, 0.5, None)),
            Err(DbcsError::MissingPrediction)
        ));
        assert!(proxy_estimate(&obs(1, 1.0, 0.5, Some(f64::NAN))).is_err());
    }

    #[test]
    fn panel_identity_and_symmetry() {
        let one = [EstimatePair {
            tau_hat: 2.0,
            sigma2_hat: 4.0,
        }];
        assert_eq!(panel_aggregate(&one).unwrap(), one[0]);

        let two = [
            EstimatePair {
                tau_hat: 2.0,
                sigma2_hat: 4.0,
            },
            EstimatePair {
                tau_hat: -2.0,
                sigma2_hat: 4.0,
            },
        ];
        let agg = panel_aggregate(&two).unwrap();
        assert_eq!(agg.tau_hat, 0.0);
        assert_eq!(agg.sigma2_hat, 8.0);
    }

    #[test]
    fn panel_twenty_identical() {
        // 20 * 9.0 = 180.0 by independent summation.
        let pairs = vec![
            EstimatePair {
                tau_hat: 1.5,
                sigma2_hat: 9.0,
            };
            20
        ];
        let agg = panel_aggregate(&pairs).unwrap();
        assert!((agg.tau_hat - 1.5).abs() < 1e-12);
        assert!((agg.sigma2_hat - 180.0).abs() < 1e-12);
    }

    #[test]
    fn panel_rejects_empty() {
        assert!(panel_aggregate(&[]).is_err());
    }

    #[test]
    fn sigma2_equals_tau_squared_per_record() {
        // Both are the squared realized IPW term; 1e-12 relative tolerance
        // for the floating-point products.
        let cases = [
            obs(1, 0.7, 0.2, None),
            obs(0, -3.2, 0.83, None),
            obs(1, 1e6, 0.01, None),
            obs(0, 1.0, 0.5, None),
        ];
        for c in cases {
            let e = ipw_estimate(&c).unwrap();
            let rel = (e.sigma2_hat - e.tau_hat * e.tau_hat).abs()
                / e.sigma2_hat.max(f64::MIN_POSITIVE);
            assert!(rel < 1e-12, "rel = {rel}");
        }
    }
}
