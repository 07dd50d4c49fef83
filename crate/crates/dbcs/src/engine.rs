//! Streaming confidence-sequence engines: one estimator + one boundary bound
//! together per experimental design, with stopping rules on top.

use serde::{Deserialize, Serialize};

use crate::boundaries::{asymp_width, exact_width};
use crate::error::{DbcsError, Result};
use crate::estimators::{ipw_estimate, panel_aggregate, proxy_estimate, EstimatePair};
use crate::mixture::{mixture_covers, mixture_half_width};
use crate::stream::{BoundaryConfig, ConfidenceBand, Observation, StreamState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Design {
    Fixed,
    Bandit,
    Timeseries,
    Panel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Exact,
    Asymptotic,
    Mixture,
}

/// Full engine configuration: which design, which boundary, whether records
/// carry proxy predictions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EngineSpec {
    pub design: Design,
    pub boundary: Boundary,
    pub proxy: bool,
    pub config: BoundaryConfig,
}

impl EngineSpec {
    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        if matches!(self.boundary, Boundary::Exact | Boundary::Mixture)
            && self.config.m_bound.is_none()
        {
            return Err(DbcsError::InvalidParameter(
                "exact and mixture boundaries require m_bound = M / p_min".into(),
            ));
        }
        Ok(())
    }
}

/// A single logical stream: fold records step by step, emit one band per step.
#[derive(Debug, Clone)]
pub struct CsEngine {
    spec: EngineSpec,
    state: StreamState,
}

impl CsEngine {
    pub fn new(spec: EngineSpec) -> Result<Self> {
        spec.validate()?;
        Ok(CsEngine {
            spec,
            state: StreamState::new(),
        })
    }

    pub fn spec(&self) -> &EngineSpec {
        &self.spec
    }

    pub fn state(&self) -> &StreamState {
        &self.state
    }

    /// Resume from a checkpointed state.
    pub fn with_state(spec: EngineSpec, state: StreamState) -> Result<Self> {
        spec.validate()?;
        Ok(CsEngine { spec, state })
    }

    fn estimate(&self, obs: &Observation) -> Result<EstimatePair> {
        let pair = if self.spec.proxy {
            proxy_estimate(obs)?
        } else {
            ipw_estimate(obs)?
        };
        // The exact boundary's proof needs |tau_hat| <= m on every record;
        // a violation means M or p_min was misdeclared.
        if matches!(self.spec.boundary, Boundary::Exact | Boundary::Mixture) {
            let m = self.spec.config.m_bound.expect("validated");
            if pair.tau_hat.abs() > m * (1.0 + 1e-12) {
                return Err(DbcsError::EstimateExceedsBound {
                    tau_hat: pair.tau_hat,
                    m,
                });
            }
        }
        Ok(pair)
    }

    /// Fold all records for one step and return the band after the step.
    pub fn step(&mut self, records: &[Observation]) -> Result<ConfidenceBand> {
        self.fold_step(records)?;
        self.band()
    }

    /// Fold one step without computing a band. Monte-Carlo loops use this plus
    /// [`CsEngine::covers`], which for the mixture boundary skips the
    /// root-solve entirely.
    ///
    /// Non-panel designs take exactly one record per step; the panel design
    /// takes one record per currently active unit (staggered entry allowed).
    pub fn fold_step(&mut self, records: &[Observation]) -> Result<()> {
        if records.is_empty() {
            return Err(DbcsError::EmptyBatch);
        }
        let pair = match self.spec.design {
            Design::Fixed | Design::Bandit | Design::Timeseries => {
                if records.len() != 1 {
                    return Err(DbcsError::InvalidParameter(format!(
                        "{:?} design takes exactly one record per step, got {}",
                        self.spec.design,
                        records.len()
                    )));
                }
                self.estimate(&records[0])?
            }
            Design::Panel => {
                let pairs = records
                    .iter()
                    .map(|r| self.estimate(r))
                    .collect::<Result<Vec<_>>>()?;
                self.state.set_n_units(records.len() as u64);
                panel_aggregate(&pairs)?
            }
        };
        self.state.fold(pair.tau_hat, pair.sigma2_hat)
    }

    /// Whether the current band contains `tau`, without solving for the band
    /// endpoints when the boundary is the mixture one.
    pub fn covers(&self, tau: f64) -> Result<bool> {
        if self.state.n_steps() == 0 {
            return Ok(true);
        }
        match self.spec.boundary {
            Boundary::Mixture => mixture_covers(
                &self.state,
                self.spec.config.m_bound.expect("validated"),
                self.spec.config.rho.unwrap_or(1.0),
                self.spec.config.alpha,
                tau,
            ),
            _ => Ok(self.band()?.covers(tau)),
        }
    }

    /// Whether the band lies strictly above `tau`. All three boundaries are
    /// symmetric around the running mean, so this is exclusion on the correct
    /// side of the mean.
    pub fn excludes_above(&self, tau: f64) -> Result<bool> {
        Ok(self.state.n_steps() > 0 && !self.covers(tau)? && self.state.mean() > tau)
    }

    /// Current band without folding anything.
    pub fn band(&self) -> Result<ConfidenceBand> {
        let cfg = &self.spec.config;
        let n_units = match self.spec.design {
            Design::Panel => self.state.n_units(),
            _ => 1,
        };
        let half_width = match self.spec.boundary {
            // The exact and mixture boundaries treat the folded per-step
            // aggregates as one stacked series; only the asymptotic width
            // carries the extra 1/n unit factor in its formula.
            Boundary::Exact => exact_width(
                self.state.n_steps(),
                self.state.s_var(),
                cfg.m_bound.expect("validated"),
                cfg.alpha,
            )?,
            Boundary::Asymptotic => asymp_width(
                self.state.n_steps(),
                self.state.s_var(),
                cfg.eta,
                cfg.alpha,
                n_units,
            )?,
            Boundary::Mixture => mixture_half_width(
                &self.state,
                cfg.m_bound.expect("validated"),
                cfg.rho.unwrap_or(1.0),
                cfg.alpha,
            )?,
        };
        Ok(ConfidenceBand::new(
            self.state.n_steps(),
            self.state.mean(),
            half_width,
        ))
    }
}

/// Algorithmic stopping rules evaluated against each emitted band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum StopRule {
    /// Stop when the band excludes zero.
    NullExclusion,
    /// Stop when the whole band sits below -epsilon (significant harm).
    HarmThreshold { epsilon: f64 },
    /// Stop when the band shows the effect is confidently below epsilon.
    FutilityBelowEpsilon { epsilon: f64 },
    /// Stop at a fixed horizon.
    Horizon { horizon: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Continue,
    StopRejectNull,
    StopFutility,
    StopHorizon,
}

pub fn evaluate_stop(band: &ConfidenceBand, rule: &StopRule) -> Decision {
    match *rule {
        StopRule::NullExclusion => {
            if !band.covers(0.0) {
                Decision::StopRejectNull
            } else {
                Decision::Continue
            }
        }
        StopRule::HarmThreshold { epsilon } => {
            if band.upper < -epsilon {
                Decision::StopRejectNull
            } else {
                Decision::Continue
            }
        }
        StopRule::FutilityBelowEpsilon { epsilon } => {
            if band.upper < epsilon {
                Decision::StopFutility
            } else {
                Decision::Continue
            }
        }
        StopRule::Horizon { horizon } => {
            if band.step >= horizon {
                Decision::StopHorizon
            } else {
                Decision::Continue
            }
        }
    }
}

/// First matching rule wins, in the order given.
pub fn evaluate_stop_rules(band: &ConfidenceBand, rules: &[StopRule]) -> Decision {
    for rule in rules {
        let d = evaluate_stop(band, rule);
        if d != Decision::Continue {
            return d;
        }
    }
    Decision::Continue
}
