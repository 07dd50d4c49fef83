//! Truncated-gamma mixture confidence sequence: a boundary whose width shrinks
//! like sqrt(B_n log B_n)/n instead of B_n/n, at the cost of root-solving.
//!
//! The wealth statistic is
//!
//!   V_n = (rho^rho e^{-rho} / gamma_low(rho, rho)) * 1/(B_n + rho)
//!         * 1F1(1, B_n + rho + 1, A_n + B_n + rho)
//!
//! with A_n = sum(tau_hat_i - tau)/m and B_n = S_n/m^2. Everything is
//! evaluated in log space because the 1F1 argument grows linearly in n.

use statrs::function::gamma::{gamma_lr, ln_gamma};

use crate::error::{DbcsError, Result};
use crate::stream::StreamState;

const SERIES_TOL: f64 = 1e-16;
const DIRECT_SERIES_MAX: usize = 100_000;
const NEGATIVE_SERIES_MAX: usize = 2_000_000;
/// Above this argument the direct series overflows f64 before converging.
const SERIES_Z_CUTOFF: f64 = 500.0;

/// Kummer 1F1(1, b, z) = sum_k z^k / (b)_k for b > 0.
///
/// May overflow to +inf for very large z; use [`ln_kummer_1f1_1`] there.
pub fn kummer_1f1_1(b: f64, z: f64) -> Result<f64> {
    ln_kummer_1f1_1(b, z).map(f64::exp)
}

/// log of 1F1(1, b, z), stable for arguments of any size.
pub fn ln_kummer_1f1_1(b: f64, z: f64) -> Result<f64> {
    if !(b > 0.0) || !b.is_finite() {
        return Err(DbcsError::InvalidParameter(format!(
            "1F1 requires b > 0, got {b}"
        )));
    }
    if !z.is_finite() {
        return Err(DbcsError::NonFinite { field: "z", value: z });
    }
    if z == 0.0 {
        return Ok(0.0);
    }
    if z < 0.0 {
        // Kummer transform: M(1, b, z) = e^z M(b-1, b, -z); the transformed
        // series has all-positive terms, so no cancellation.
        return Ok(z + ln_series_m_bm1_b(b, -z)?);
    }
    if z <= SERIES_Z_CUTOFF {
        let mut sum = 1.0f64;
        let mut term = 1.0f64;
        for k in 0..DIRECT_SERIES_MAX {
            term *= z / (b + k as f64);
            sum += term;
            if term < SERIES_TOL * sum {
                return Ok(sum.ln());
            }
        }
        return Err(DbcsError::Numerical {
            routine: "kummer_1f1_1",
            detail: format!("series did not converge for b = {b}, z = {z}"),
        });
    }
    // Large positive z: M(1, b, z) = (b-1) z^(1-b) e^z gamma_low(b-1, z),
    // from gamma_low(s, x) = s^-1 x^s e^-x M(1, s+1, x). Needs b > 1; lift
    // via M(1, b, z) = 1 + (z/b) M(1, b+1, z) otherwise.
    if b <= 1.0 {
        let inner = ln_kummer_1f1_1(b + 1.0, z)?;
        let t = (z / b).ln() + inner;
        return Ok(ln_1p_exp(t));
    }
    let s = b - 1.0;
    let p = gamma_lr(s, z);
    if !(p > 0.0) {
        return Err(DbcsError::Numerical {
            routine: "kummer_1f1_1",
            detail: format!("regularized gamma underflow at s = {s}, z = {z}"),
        });
    }
    Ok(s.ln() + (1.0 - b) * z.ln() + z + ln_gamma(s) + p.ln())
}

/// log of M(b-1, b, x) for x > 0, via the positive-term series
/// sum_k ((b-1)/(b-1+k)) x^k / k! with dynamic rescaling.
fn ln_series_m_bm1_b(b: f64, x: f64) -> Result<f64> {
    let s = b - 1.0;
    if s <= 0.0 {
        // b in (0, 1]: fall back on the ratio-of-Pochhammer series directly;
        // coefficients (b-1)_k/(b)_k stay bounded, terms still positive for
        // even k but can alternate for b < 1. Restrict to b > 1 callers.
        return Err(DbcsError::InvalidParameter(format!(
            "negative-z evaluation requires b > 1, got {b}"
        )));
    }
    let mut sum = 1.0f64;
    let mut term = 1.0f64;
    let mut log_offset = 0.0f64;
    for k in 1..=NEGATIVE_SERIES_MAX {
        let kf = k as f64;
        // term ratio: (x/k) * c_k/c_{k-1} with c_k = s/(s+k)
        term *= x / kf * (s + kf - 1.0) / (s + kf);
        sum += term;
        if sum > 1e280 {
            sum *= 1e-280;
            term *= 1e-280;
            log_offset += 280.0 * std::f64::consts::LN_10;
        }
        if term < SERIES_TOL * sum {
            return Ok(sum.ln() + log_offset);
        }
    }
    Err(DbcsError::Numerical {
        routine: "kummer_1f1_1",
        detail: format!("negative-z series did not converge for b = {b}, x = {x}"),
    })
}

/// log(1 + e^t) without overflow.
fn ln_1p_exp(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

/// Inputs to the mixture wealth statistic at one candidate effect value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixtureStats {
    /// A_n = sum(tau_hat_i - tau)/m for the candidate tau.
    pub a_n: f64,
    /// B_n = S_n / m^2.
    pub b_n: f64,
    pub rho: f64,
    pub m: f64,
}

impl MixtureStats {
    fn validate(&self) -> Result<()> {
        if !(self.b_n >= 0.0) {
            return Err(DbcsError::InvalidParameter(format!(
                "b_n must be nonnegative, got {}",
                self.b_n
            )));
        }
        if !(self.rho > 0.0) {
            return Err(DbcsError::InvalidParameter(format!(
                "rho must be positive, got {}",
                self.rho
            )));
        }
        if !(self.m > 0.0) {
            return Err(DbcsError::InvalidParameter(format!(
                "m must be positive, got {}",
                self.m
            )));
        }
        Ok(())
    }
}

/// log of the truncation constant rho^rho e^-rho / gamma_low(rho, rho).
fn ln_mixture_constant(rho: f64) -> f64 {
    // gamma_low(rho, rho) = Gamma(rho) * P(rho, rho)
    let ln_gamma_low = ln_gamma(rho) + gamma_lr(rho, rho).ln();
    rho * rho.ln() - rho - ln_gamma_low
}

/// The wealth statistic V_n; see module docs. Use [`ln_mixture_statistic`]
/// when the value may overflow.
pub fn mixture_statistic(stats: &MixtureStats) -> Result<f64> {
    ln_mixture_statistic(stats).map(f64::exp)
}

pub fn ln_mixture_statistic(stats: &MixtureStats) -> Result<f64> {
    stats.validate()?;
    let b = stats.b_n + stats.rho + 1.0;
    let z = stats.a_n + stats.b_n + stats.rho;
    Ok(ln_mixture_constant(stats.rho) - (stats.b_n + stats.rho).ln()
        + ln_kummer_1f1_1(b, z)?)
}

/// Which boundary of the two-sided band to solve for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Lower,
    Upper,
}

const MAX_BRACKET_DOUBLINGS: u32 = 200;

/// Solve the symmetric deviation d >= 0 with V_n(d) = 1/alpha_tilde, where
/// the candidate tau sits at distance d from the running mean on the given
/// side. Both sides share one root because A_n(d) = n d / m either way.
fn solve_deviation(state: &StreamState, m: f64, rho: f64, alpha_tilde: f64) -> Result<f64> {
    let n = state.n_steps() as f64;
    let b_n = state.s_var() / (m * m);
    let target = (1.0 / alpha_tilde).ln();
    let ln_v = |d: f64| {
        ln_mixture_statistic(&MixtureStats {
            a_n: n * d / m,
            b_n,
            rho,
            m,
        })
    };
    if ln_v(0.0)? >= target {
        return Ok(0.0);
    }
    // Geometric bracket expansion from a scale set by the data.
    let mut hi = (m / n).max(state.mean().abs()).max(1e-6);
    let mut lo = 0.0;
    let mut bracketed = false;
    for _ in 0..MAX_BRACKET_DOUBLINGS {
        if ln_v(hi)? >= target {
            bracketed = true;
            break;
        }
        lo = hi;
        hi *= 2.0;
    }
    if !bracketed {
        return Err(DbcsError::Numerical {
            routine: "mixture_bound",
            detail: format!("bracket expansion failed; V_n stays below 1/alpha up to d = {hi}"),
        });
    }
    // Bisection; ln V_n is strictly increasing in d.
    while hi - lo > 1e-8 * (1.0 + hi.abs()) {
        let mid = 0.5 * (lo + hi);
        if ln_v(mid)? >= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// One boundary of the two-sided mixture confidence sequence, with the alpha
/// budget split equally across sides (alpha_tilde = alpha/2 per side).
pub fn mixture_bound(
    state: &StreamState,
    m: f64,
    rho: f64,
    alpha: f64,
    side: Side,
) -> Result<f64> {
    if state.n_steps() == 0 {
        return Err(DbcsError::InvalidParameter(
            "mixture_bound needs at least one folded step".into(),
        ));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(DbcsError::InvalidParameter(format!(
            "alpha must be in (0,1), got {alpha}"
        )));
    }
    let d = solve_deviation(state, m, rho, alpha / 2.0)?;
    Ok(match side {
        Side::Lower => state.mean() - d,
        Side::Upper => state.mean() + d,
    })
}

/// Half-width of the two-sided mixture band around the running mean.
pub fn mixture_half_width(state: &StreamState, m: f64, rho: f64, alpha: f64) -> Result<f64> {
    if state.n_steps() == 0 {
        return Ok(f64::INFINITY);
    }
    solve_deviation(state, m, rho, alpha / 2.0)
}

/// True iff the candidate tau is inside the two-sided band, evaluated
/// directly from the wealth statistics without root-solving.
pub fn mixture_covers(state: &StreamState, m: f64, rho: f64, alpha: f64, tau: f64) -> Result<bool> {
    let n = state.n_steps() as f64;
    let b_n = state.s_var() / (m * m);
    let target = (2.0 / alpha).ln();
    let dev = (state.sum_tau() - n * tau) / m;
    for a_n in [dev, -dev] {
        let ln_v = ln_mixture_statistic(&MixtureStats { a_n, b_n, rho, m })?;
        if ln_v >= target {
            return Ok(false);
        }
    }
    Ok(true)
}
