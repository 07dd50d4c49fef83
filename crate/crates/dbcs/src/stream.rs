//! Domain types and streaming accumulators shared by every confidence-sequence
//! variant: one record schema, O(1) running sufficient statistics, and a
//! checkpoint format for long-lived streaming deployments.

use serde::{Deserialize, Serialize};

use crate::error::{DbcsError, Result};

/// One experimental record.
///
/// `unit_id` is carried even in single-series mode (fixed at 0) so that all
/// four designs share one schema. `p1` is the probability that `arm == 1`
/// given everything observed so far; it is stored per record because in
/// adaptive designs the assigner, not this library, knows it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub unit_id: u64,
    pub time: u64,
    pub arm: u8,
    pub outcome: f64,
    pub p1: f64,
    pub prediction: Option<f64>,
}

impl Observation {
    pub fn validate(&self) -> Result<()> {
        if !(self.p1 > 0.0 && self.p1 < 1.0) {
            return Err(DbcsError::Positivity { p1: self.p1 });
        }
        if !self.outcome.is_finite() {
            return Err(DbcsError::NonFinite {
                field: "outcome",
                value: self.outcome,
            });
        }
        if let Some(yhat) = self.prediction {
            if !yhat.is_finite() {
                return Err(DbcsError::NonFinite {
                    field: "prediction",
                    value: yhat,
                });
            }
        }
        if self.arm > 1 {
            return Err(DbcsError::InvalidParameter(format!(
                "arm must be 0 or 1, got {}",
                self.arm
            )));
        }
        if self.time < 1 {
            return Err(DbcsError::InvalidParameter("time must be >= 1".into()));
        }
        Ok(())
    }
}

/// Neumaier-compensated running sum. The variance sum enters a log and a
/// square root downstream, so drift over 10^6 records must stay below 1e-9
/// relative; plain accumulation does not guarantee that.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Running sufficient statistics for one confidence-sequence stream.
///
/// Holds the step counter, the sum of per-record point estimates and the sum
/// of variance-bound terms. Value semantics: single writer per experiment,
/// safe to copy and send across threads.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StreamState {
    n_steps: u64,
    sum_tau: CompensatedSum,
    s_var: CompensatedSum,
    n_units: u64,
}

impl StreamState {
    pub fn new() -> Self {
        StreamState {
            n_steps: 0,
            sum_tau: CompensatedSum::default(),
            s_var: CompensatedSum::default(),
            n_units: 1,
        }
    }

    pub fn n_steps(&self) -> u64 {
        self.n_steps
    }

    pub fn sum_tau(&self) -> f64 {
        self.sum_tau.value()
    }

    pub fn s_var(&self) -> f64 {
        self.s_var.value()
    }

    pub fn n_units(&self) -> u64 {
        self.n_units
    }

    pub fn set_n_units(&mut self, n_units: u64) {
        self.n_units = n_units.max(1);
    }

    /// Running mean of the folded point estimates.
    pub fn mean(&self) -> f64 {
        if self.n_steps == 0 {
            0.0
        } else {
            self.sum_tau() / self.n_steps as f64
        }
    }

    /// Fold one per-step estimate pair into the running sums.
    pub fn fold(&mut self, tau_hat: f64, sigma2_hat: f64) -> Result<()> {
        if !tau_hat.is_finite() {
            return Err(DbcsError::NonFinite {
                field: "tau_hat",
                value: tau_hat,
            });
        }
        if !sigma2_hat.is_finite() || sigma2_hat < 0.0 {
            return Err(DbcsError::NonFinite {
                field: "sigma2_hat",
                value: sigma2_hat,
            });
        }
        self.n_steps += 1;
        self.sum_tau.add(tau_hat);
        self.s_var.add(sigma2_hat);
        Ok(())
    }

    /// Pure read of the current state as a serializable checkpoint.
    pub fn snapshot(&self) -> SnapshotRecord {
        SnapshotRecord {
            n_steps: self.n_steps,
            sum_tau: fmt_f64(self.sum_tau.sum),
            sum_tau_comp: fmt_f64(self.sum_tau.comp),
            s_var: fmt_f64(self.s_var.sum),
            s_var_comp: fmt_f64(self.s_var.comp),
            n_units: self.n_units,
        }
    }

    pub fn restore(record: &SnapshotRecord) -> Result<StreamState> {
        let sum_tau = parse_f64(&record.sum_tau, "sum_tau")?;
        let sum_tau_comp = parse_f64(&record.sum_tau_comp, "sum_tau_comp")?;
        let s_var = parse_f64(&record.s_var, "s_var")?;
        let s_var_comp = parse_f64(&record.s_var_comp, "s_var_comp")?;
        if s_var + s_var_comp < 0.0 {
            return Err(DbcsError::InvalidSnapshot(format!(
                "negative variance sum {}",
                s_var + s_var_comp
            )));
        }
        if record.n_units == 0 {
            return Err(DbcsError::InvalidSnapshot("n_units must be >= 1".into()));
        }
        if record.n_steps == 0 && (sum_tau != 0.0 || s_var != 0.0) {
            return Err(DbcsError::InvalidSnapshot(
                "zero steps with nonzero sums".into(),
            ));
        }
        Ok(StreamState {
            n_steps: record.n_steps,
            sum_tau: CompensatedSum {
                sum: sum_tau,
                comp: sum_tau_comp,
            },
            s_var: CompensatedSum {
                sum: s_var,
                comp: s_var_comp,
            },
            n_units: record.n_units,
        })
    }
}

/// Flat key-value checkpoint. Numeric fields are encoded as shortest
/// round-trip decimal strings so the serialized form restores bit-exactly on
/// any platform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotRecord {
    pub n_steps: u64,
    pub sum_tau: String,
    pub sum_tau_comp: String,
    pub s_var: String,
    pub s_var_comp: String,
    pub n_units: u64,
}

fn fmt_f64(x: f64) -> String {
    // `{:?}` is the shortest representation that parses back to the same bits.
    format!("{:?}", x)
}

fn parse_f64(s: &str, field: &str) -> Result<f64> {
    s.parse::<f64>()
        .map_err(|e| DbcsError::InvalidSnapshot(format!("field {field}: {e}")))
}

/// Boundary parameters shared by all designs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryConfig {
    /// Uniform type-1 error level.
    pub alpha: f64,
    /// Mixture scale for the asymptotic boundary.
    pub eta: f64,
    /// m = M / p_min, required by the exact and mixture boundaries.
    pub m_bound: Option<f64>,
    /// Truncated-gamma parameter for the mixture boundary.
    pub rho: Option<f64>,
}

impl BoundaryConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(DbcsError::InvalidParameter(format!(
                "alpha must be in (0,1), got {}",
                self.alpha
            )));
        }
        if !(self.eta > 0.0) || !self.eta.is_finite() {
            return Err(DbcsError::InvalidParameter(format!(
                "eta must be positive, got {}",
                self.eta
            )));
        }
        if let Some(m) = self.m_bound {
            if !(m > 0.0) || !m.is_finite() {
                return Err(DbcsError::InvalidParameter(format!(
                    "m_bound must be positive, got {m}"
                )));
            }
        }
        if let Some(rho) = self.rho {
            if !(rho > 0.0) || !rho.is_finite() {
                return Err(DbcsError::InvalidParameter(format!(
                    "rho must be positive, got {rho}"
                )));
            }
        }
        Ok(())
    }
}

impl Default for BoundaryConfig {
    fn default() -> Self {
        // eta = 0.77 tunes the width minimum to roughly the 10th step at
        // alpha = 0.05; it is the sensible default when the user does not
        // call tune_eta.
        BoundaryConfig {
            alpha: 0.05,
            eta: 0.77,
            m_bound: None,
            rho: None,
        }
    }
}

/// One emitted interval of the confidence sequence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceBand {
    pub step: u64,
    pub center: f64,
    pub half_width: f64,
    pub lower: f64,
    pub upper: f64,
}

impl ConfidenceBand {
    pub fn new(step: u64, center: f64, half_width: f64) -> Self {
        ConfidenceBand {
            step,
            center,
            half_width,
            lower: center - half_width,
            upper: center + half_width,
        }
    }

    pub fn covers(&self, value: f64) -> bool {
        self.lower <= value && value <= self.upper
    }
}
