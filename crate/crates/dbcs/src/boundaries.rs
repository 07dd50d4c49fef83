//! Closed-form confidence-sequence half-widths and the mixture-scale tuner.
//!
//! Two width formulas cover every design in the library: the exact
//! empirical-Bernstein boundary (needs m = M / p_min) and the asymptotic
//! Gaussian-mixture boundary (needs only the running variance sum). The tuner
//! picks the mixture scale eta that minimizes the width proxy at a chosen
//! step, via the lower branch of the Lambert W function.

use crate::error::{DbcsError, Result};

/// Default mixture scale when the user does not tune: minimizes the width
/// proxy near the 10th step at alpha = 0.05.
pub const DEFAULT_ETA: f64 = 0.77;
/// Default tuning step.
pub const DEFAULT_T_STAR: u64 = 10;

/// A tuned mixture scale and the step it was tuned for.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EtaChoice {
    pub eta: f64,
    pub t_star: u64,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(DbcsError::InvalidParameter(format!(
            "alpha must be in (0,1), got {alpha}"
        )));
    }
    Ok(())
}

/// Exact (non-asymptotic) half-width:
///
///   m(m+1)/n * log(2/alpha) + (S_n/n) * ((m+1)/m * log(1 + 1/m) - 1/m)
///
/// Defined as +infinity at n = 0 (no data, vacuous band).
pub fn exact_width(n: u64, s_var: f64, m: f64, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if !(m > 0.0) || !m.is_finite() {
        return Err(DbcsError::InvalidParameter(format!(
            "m must be positive, got {m}"
        )));
    }
    if s_var < 0.0 {
        return Err(DbcsError::InvalidParameter(format!(
            "s_var must be nonnegative, got {s_var}"
        )));
    }
    if n == 0 {
        return Ok(f64::INFINITY);
    }
    let n = n as f64;
    // log(1 + 1/m) via ln_1p stays accurate for large m.
    let c_m = (m + 1.0) / m * (1.0 / m).ln_1p() - 1.0 / m;
    Ok(m * (m + 1.0) / n * (2.0 / alpha).ln() + s_var / n * c_m)
}

/// Asymptotic half-width:
///
///   1/(n_steps * n_units) * sqrt((S eta^2 + 1)/eta^2 * log((S eta^2 + 1)/alpha^2))
///
/// `n_units = 1` is the single-stream form; `n_units = n` is the stacked
/// panel form. Defined as +infinity at n_steps = 0.
pub fn asymp_width(n_steps: u64, s_var: f64, eta: f64, alpha: f64, n_units: u64) -> Result<f64> {
    check_alpha(alpha)?;
    if !(eta > 0.0) || !eta.is_finite() {
        return Err(DbcsError::InvalidParameter(format!(
            "eta must be positive, got {eta}"
        )));
    }
    if s_var < 0.0 {
        return Err(DbcsError::InvalidParameter(format!(
            "s_var must be nonnegative, got {s_var}"
        )));
    }
    if n_units == 0 {
        return Err(DbcsError::InvalidParameter("n_units must be >= 1".into()));
    }
    if n_steps == 0 {
        return Ok(f64::INFINITY);
    }
    let eta2 = eta * eta;
    let g = s_var * eta2 + 1.0;
    // log-space split keeps the argument finite when s_var is huge in panel
    // mode: log(g/alpha^2) = log(g) - 2 log(alpha).
    let log_term = g.ln() - 2.0 * alpha.ln();
    let scale = 1.0 / (n_steps as f64 * n_units as f64);
    Ok(scale * (g / eta2 * log_term).sqrt())
}

/// Lower branch of the Lambert W function on (-1/e, 0): the solution
/// w <= -1 of w e^w = x. Seed w0 = log(-x) - log(-log(-x)), then Halley
/// iteration to machine precision.
pub fn lambert_w_m1(x: f64) -> Result<f64> {
    let branch_point = -(-1.0f64).exp(); // -1/e
    if !(x > branch_point && x < 0.0) {
        return Err(DbcsError::InvalidParameter(format!(
            "lambert_w_m1 domain is (-1/e, 0), got {x}"
        )));
    }
    // Near the branch point the series in sqrt(2(1 + e x)) is better behaved
    // than the log-log seed.
    let p = (2.0 * (1.0 + std::f64::consts::E * x)).sqrt();
    let mut w = if p < 1e-2 {
        -1.0 - p - p * p / 3.0
    } else {
        let l1 = (-x).ln();
        let l2 = (-l1).ln();
        l1 - l2
    };
    for _ in 0..64 {
        let ew = w.exp();
        let f = w * ew - x;
        if f == 0.0 {
            break;
        }
        let wp1 = w + 1.0;
        let denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1);
        let step = f / denom;
        w -= step;
        if step.abs() <= 1e-16 * w.abs() {
            break;
        }
    }
    let resid = (w * w.exp() - x).abs() / x.abs();
    if resid > 1e-12 {
        return Err(DbcsError::Numerical {
            routine: "lambert_w_m1",
            detail: format!("residual {resid} at x = {x}"),
        });
    }
    Ok(w)
}

/// Mixture scale minimizing the unit-variance width proxy at step `t_star`:
///
///   eta = sqrt((-W_{-1}(-alpha^2 e) - 1) / t_star)
pub fn tune_eta(alpha: f64, t_star: u64) -> Result<EtaChoice> {
    check_alpha(alpha)?;
    if t_star == 0 {
        return Err(DbcsError::InvalidParameter("t_star must be >= 1".into()));
    }
    let x = -alpha * alpha * std::f64::consts::E;
    let w = lambert_w_m1(x)?;
    let eta = ((-w - 1.0) / t_star as f64).sqrt();
    Ok(EtaChoice { eta, t_star })
}
