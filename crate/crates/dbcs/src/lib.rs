//! Design-based anytime-valid confidence sequences for treatment effects.
//!
//! The library streams experiment records (one arm assignment, one outcome,
//! one assignment probability per record), folds them into O(1) sufficient
//! statistics, and emits a confidence band after every step that is valid
//! uniformly over all stopping times. Four designs share the same machinery:
//! fixed randomization, adaptive bandits, single time series with carryover,
//! and panels of units observed over time. Three boundaries are available
//! (exact empirical-Bernstein, asymptotic Gaussian-mixture, truncated-gamma
//! mixture), plus proxy-outcome variance reduction and a Monte-Carlo harness
//! for coverage and stopping-time studies.

pub mod boundaries;
pub mod dgps;
pub mod engine;
pub mod error;
pub mod estimators;
pub mod evalsuite;
pub mod io;
pub mod mixture;
pub mod rng;
pub mod stream;

pub use boundaries::{asymp_width, exact_width, lambert_w_m1, tune_eta, EtaChoice, DEFAULT_ETA};
pub use engine::{Boundary, CsEngine, Decision, Design, EngineSpec, StopRule};
pub use error::{DbcsError, Result};
pub use estimators::{ipw_estimate, panel_aggregate, proxy_estimate, EstimatePair};
pub use stream::{BoundaryConfig, ConfidenceBand, Observation, SnapshotRecord, StreamState};
