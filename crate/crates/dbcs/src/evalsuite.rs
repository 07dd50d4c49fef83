//! Monte-Carlo evaluation harness: coverage, stopping times and power for the
//! confidence-sequence engines, plus the fixed-time CI and Bonferroni-hybrid
//! comparators and the peeking-t-test curve.
//!
//! Replicates are embarrassingly parallel; every draw comes from the
//! counter-based RNG, so reports are identical for any thread count.

use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::dgps::{generate, DgpSpec, ProxyModel};
use crate::engine::{CsEngine, EngineSpec};
use crate::error::{DbcsError, Result};
use crate::rng::CounterRng;
use crate::stream::{ConfidenceBand, StreamState};

/// What counts as a detection when recording stopping times.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectRule {
    /// Band excludes zero on either side.
    NullExclusion,
    /// Band sits strictly above zero (the fastest-positive-detection
    /// stopping-time convention used for the comparator tables).
    PositiveSignificant,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub dgp: DgpSpec,
    pub engine: EngineSpec,
    pub proxy_model: ProxyModel,
    pub horizon: u64,
    pub replicates: u64,
    pub detect: DetectRule,
    /// Steps whose bands are ignored for detection (coverage is still
    /// checked from step 1 unless `coverage_warmup` is set).
    pub warmup: u64,
    /// Steps whose bands are ignored for the uniform-coverage tally. The
    /// asymptotic boundary makes no claim at tiny n, and with a large
    /// first-step effect a single-arm band is degenerate, so scenarios that
    /// need it start the tally after a short burn-in.
    pub coverage_warmup: u64,
    /// When set, also run the Bonferroni hybrid with K scheduled looks.
    pub hybrid_k: Option<u64>,
}

/// Everything retained about one replicate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RepOutcome {
    pub replicate: u64,
    /// First step whose band missed the true estimand, if any.
    pub first_miss_step: Option<u64>,
    /// First post-warmup step satisfying the detect rule, if any.
    pub detect_step: Option<u64>,
    pub final_center: f64,
    pub final_half_width: f64,
    /// Fixed-time CI at the horizon (same center, normal quantile).
    pub ci_half_width: f64,
    pub ci_detected: bool,
    pub hybrid_detect_step: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct McReport {
    pub horizon: u64,
    pub outcomes: Vec<RepOutcome>,
}

impl McReport {
    pub fn replicates(&self) -> usize {
        self.outcomes.len()
    }

    /// Fraction of paths with ANY step failing coverage.
    pub fn uniform_miscoverage(&self) -> f64 {
        let misses = self.outcomes.iter().filter(|o| o.first_miss_step.is_some()).count();
        misses as f64 / self.replicates() as f64
    }

    /// Binomial standard error of the uniform miscoverage estimate.
    pub fn miscoverage_se(&self) -> f64 {
        let p = self.uniform_miscoverage();
        (p * (1.0 - p) / self.replicates() as f64).sqrt()
    }

    /// Fraction of paths that detected by the horizon.
    pub fn power(&self) -> f64 {
        let hits = self.outcomes.iter().filter(|o| o.detect_step.is_some()).count();
        hits as f64 / self.replicates() as f64
    }

    /// Mean detection step, counting undetected paths at the horizon.
    pub fn mean_stop_time(&self) -> f64 {
        let total: u64 = self
            .outcomes
            .iter()
            .map(|o| o.detect_step.unwrap_or(self.horizon))
            .sum();
        total as f64 / self.replicates() as f64
    }

    /// Median detection step with the same horizon fallback.
    pub fn median_stop_time(&self) -> f64 {
        let mut stops: Vec<u64> = self
            .outcomes
            .iter()
            .map(|o| o.detect_step.unwrap_or(self.horizon))
            .collect();
        stops.sort_unstable();
        let n = stops.len();
        if n % 2 == 1 {
            stops[n / 2] as f64
        } else {
            (stops[n / 2 - 1] + stops[n / 2]) as f64 / 2.0
        }
    }

    /// Median detection step over paths that detected at all. Undetected
    /// paths have no first-exclusion step, so they are left out rather than
    /// pinned to the horizon; NaN when nothing detected.
    pub fn median_stop_detected(&self) -> f64 {
        let mut stops: Vec<u64> = self
            .outcomes
            .iter()
            .filter_map(|o| o.detect_step)
            .collect();
        if stops.is_empty() {
            return f64::NAN;
        }
        stops.sort_unstable();
        let n = stops.len();
        if n % 2 == 1 {
            stops[n / 2] as f64
        } else {
            (stops[n / 2 - 1] + stops[n / 2]) as f64 / 2.0
        }
    }

    /// Mean full width (2x half-width) of the CS band at the horizon.
    pub fn mean_width_at_horizon(&self) -> f64 {
        2.0 * self.outcomes.iter().map(|o| o.final_half_width).sum::<f64>()
            / self.replicates() as f64
    }

    /// Mean full width of the fixed-time CI at the horizon.
    pub fn mean_ci_width(&self) -> f64 {
        2.0 * self.outcomes.iter().map(|o| o.ci_half_width).sum::<f64>()
            / self.replicates() as f64
    }

    pub fn ci_power(&self) -> f64 {
        let hits = self.outcomes.iter().filter(|o| o.ci_detected).count();
        hits as f64 / self.replicates() as f64
    }

    pub fn hybrid_power(&self) -> f64 {
        let hits = self
            .outcomes
            .iter()
            .filter(|o| o.hybrid_detect_step.is_some())
            .count();
        hits as f64 / self.replicates() as f64
    }

    pub fn hybrid_mean_stop_time(&self) -> f64 {
        let total: u64 = self
            .outcomes
            .iter()
            .map(|o| o.hybrid_detect_step.unwrap_or(self.horizon))
            .sum();
        total as f64 / self.replicates() as f64
    }

    /// Tidy CSV: one row per (scenario, method, metric). Coverage is reported
    /// alongside miscoverage because the source tables label the column both
    /// ways depending on the reader.
    pub fn write_summary_csv<W: Write>(&self, w: &mut W, scenario: &str) -> std::io::Result<()> {
        writeln!(w, "scenario,method,metric,value")?;
        let rows = [
            ("cs", "miscoverage", self.uniform_miscoverage()),
            ("cs", "coverage", 1.0 - self.uniform_miscoverage()),
            ("cs", "stop", self.mean_stop_time()),
            ("cs", "median_stop", self.median_stop_time()),
            ("cs", "median_stop_detected", self.median_stop_detected()),
            ("cs", "width", self.mean_width_at_horizon()),
            ("cs", "power", self.power()),
            ("ci", "width", self.mean_ci_width()),
            ("ci", "power", self.ci_power()),
            ("ci", "stop", self.horizon as f64),
            ("hybrid", "power", self.hybrid_power()),
            ("hybrid", "stop", self.hybrid_mean_stop_time()),
        ];
        for (method, metric, value) in rows {
            writeln!(w, "{scenario},{method},{metric},{}", sig9(value))?;
        }
        Ok(())
    }
}

/// Format with 9 significant digits for reproducibility diffing.
pub fn sig9(x: f64) -> String {
    if x == 0.0 {
        "0".to_string()
    } else {
        format!("{:.8e}", x)
    }
}

/// Fixed-time design-based CI with the same center and variance bound as the
/// CS: center +/- z_{1-alpha/2} sqrt(S_n) / (n_steps * n_units).
pub fn comparator_ci(state: &StreamState, alpha: f64) -> Result<ConfidenceBand> {
    if state.n_steps() == 0 {
        return Err(DbcsError::InvalidParameter(
            "comparator_ci needs a nonempty state".into(),
        ));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(DbcsError::InvalidParameter(format!(
            "alpha must be in (0,1), got {alpha}"
        )));
    }
    let z = Normal::standard().inverse_cdf(1.0 - alpha / 2.0);
    let half = z * state.s_var().sqrt() / (state.n_steps() as f64 * state.n_units() as f64);
    Ok(ConfidenceBand::new(state.n_steps(), state.mean(), half))
}

/// Bonferroni hybrid: the same CI formula at each scheduled state with the
/// level split as alpha / K.
pub fn comparator_hybrid(schedule: &[StreamState], alpha: f64) -> Result<Vec<ConfidenceBand>> {
    if schedule.is_empty() {
        return Err(DbcsError::InvalidParameter(
            "hybrid schedule must be nonempty".into(),
        ));
    }
    let mut last = 0;
    for s in schedule {
        if s.n_steps() <= last && last > 0 {
            return Err(DbcsError::InvalidParameter(
                "hybrid schedule must be strictly increasing".into(),
            ));
        }
        last = s.n_steps();
    }
    let per_test = alpha / schedule.len() as f64;
    schedule.iter().map(|s| comparator_ci(s, per_test)).collect()
}

fn detected(engine: &CsEngine, rule: DetectRule) -> Result<bool> {
    match rule {
        DetectRule::NullExclusion => Ok(!engine.covers(0.0)?),
        DetectRule::PositiveSignificant => engine.excludes_above(0.0),
    }
}

fn band_detected(band: &ConfidenceBand, rule: DetectRule) -> bool {
    match rule {
        DetectRule::NullExclusion => !band.covers(0.0),
        DetectRule::PositiveSignificant => band.lower > 0.0,
    }
}

fn run_one(cfg: &McConfig, replicate: u64) -> Result<RepOutcome> {
    let stream = generate(&cfg.dgp, cfg.horizon, replicate, cfg.proxy_model)?;
    let mut engine = CsEngine::new(cfg.engine)?;
    let schedule: Vec<u64> = match cfg.hybrid_k {
        Some(k) => (1..=k).map(|j| j * cfg.horizon / k).collect(),
        None => Vec::new(),
    };
    let per_test_alpha = cfg.hybrid_k.map(|k| cfg.engine.config.alpha / k as f64);

    let mut first_miss_step = None;
    let mut detect_step = None;
    let mut hybrid_detect_step = None;
    for (idx, records) in stream.steps.iter().enumerate() {
        let t = (idx + 1) as u64;
        engine.fold_step(records)?;
        if t > cfg.coverage_warmup
            && first_miss_step.is_none()
            && !engine.covers(stream.truth[idx])?
        {
            first_miss_step = Some(t);
        }
        if detect_step.is_none() && t > cfg.warmup && detected(&engine, cfg.detect)? {
            detect_step = Some(t);
        }
        if hybrid_detect_step.is_none() && schedule.contains(&t) {
            let band = comparator_ci(engine.state(), per_test_alpha.expect("schedule set"))?;
            if band_detected(&band, cfg.detect) {
                hybrid_detect_step = Some(t);
            }
        }
    }
    let final_band = engine.band()?;
    let ci = comparator_ci(engine.state(), cfg.engine.config.alpha)?;
    Ok(RepOutcome {
        replicate,
        first_miss_step,
        detect_step,
        final_center: final_band.center,
        final_half_width: final_band.half_width,
        ci_half_width: ci.half_width,
        ci_detected: band_detected(&ci, cfg.detect),
        hybrid_detect_step,
    })
}

/// Run the Monte Carlo. Deterministic given the DGP seed; the parallelism
/// degree never changes the report because replicate outputs are collected in
/// index order.
pub fn run_mc(cfg: &McConfig) -> Result<McReport> {
    if cfg.replicates == 0 || cfg.horizon == 0 {
        return Err(DbcsError::InvalidParameter(
            "replicates and horizon must be >= 1".into(),
        ));
    }
    let outcomes: Result<Vec<RepOutcome>> = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| run_one(cfg, r))
        .collect();
    Ok(McReport {
        horizon: cfg.horizon,
        outcomes: outcomes?,
    })
}

/// Cumulative type-1 error of an analyst running a two-sided one-sample
/// t-test at level alpha after every new iid N(0,1) observation.
///
/// Returns `curve[n-1]` = fraction of paths that rejected at some sample size
/// <= n; entries for n < 2 are 0 (no test is possible).
pub fn peeking_ttest_curve(
    alpha: f64,
    max_n: u64,
    replicates: u64,
    base_seed: u64,
) -> Result<Vec<f64>> {
    if max_n < 2 {
        return Err(DbcsError::InvalidParameter("max_n must be >= 2".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(DbcsError::InvalidParameter(format!(
            "alpha must be in (0,1), got {alpha}"
        )));
    }
    // Critical values t_{n-1, 1-alpha/2} for n = 2..=max_n.
    let crit: Vec<f64> = (2..=max_n)
        .map(|n| {
            StudentsT::new(0.0, 1.0, (n - 1) as f64)
                .expect("valid dof")
                .inverse_cdf(1.0 - alpha / 2.0)
        })
        .collect();

    let first_rejections: Vec<Option<u64>> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            // Welford running mean / sum of squared deviations.
            let mut mean = 0.0f64;
            let mut m2 = 0.0f64;
            for t in 1..=max_n {
                let x: f64 = CounterRng::at(base_seed, r, 0, t, 0).sample(StandardNormal);
                let delta = x - mean;
                mean += delta / t as f64;
                m2 += delta * (x - mean);
                if t >= 2 {
                    let sd = (m2 / (t - 1) as f64).sqrt();
                    if sd > 0.0 {
                        let stat = mean.abs() * (t as f64).sqrt() / sd;
                        if stat > crit[(t - 2) as usize] {
                            return Some(t);
                        }
                    }
                }
            }
            None
        })
        .collect();

    let mut counts = vec![0u64; max_n as usize];
    for fr in first_rejections.into_iter().flatten() {
        counts[(fr - 1) as usize] += 1;
    }
    let mut curve = Vec::with_capacity(max_n as usize);
    let mut cum = 0u64;
    for c in counts {
        cum += c;
        curve.push(cum as f64 / replicates as f64);
    }
    Ok(curve)
}

/// Curve CSV: one row per sample size.
pub fn write_curve_csv<W: Write>(w: &mut W, curve: &[f64]) -> std::io::Result<()> {
    writeln!(w, "n,cumulative_rejection")?;
    for (i, v) in curve.iter().enumerate() {
        writeln!(w, "{},{}", i + 1, sig9(*v))?;
    }
    Ok(())
}

/// Canonical scenario configurations used by both the CLI and the acceptance
/// suite. Each takes the replicate count so smoke runs and full runs share
/// everything else.
pub mod presets {
    use super::{DetectRule, McConfig};
    use crate::dgps::{DgpKind, DgpSpec, PanelParams, ProxyModel};
    use crate::engine::{Boundary, Design, EngineSpec};
    use crate::stream::BoundaryConfig;

    fn panel_engine(proxy: bool) -> EngineSpec {
        EngineSpec {
            design: Design::Panel,
            boundary: Boundary::Asymptotic,
            proxy,
            config: BoundaryConfig::default(),
        }
    }

    /// Linear AR(1) panel, 20 units over 100 steps.
    pub fn table1_linear(replicates: u64, proxy: bool) -> McConfig {
        McConfig {
            dgp: DgpSpec {
                kind: DgpKind::PanelLinear(PanelParams::default()),
                seed: 1001,
            },
            engine: panel_engine(proxy),
            proxy_model: if proxy { ProxyModel::PooledOls } else { ProxyModel::None },
            horizon: 100,
            replicates,
            detect: DetectRule::NullExclusion,
            warmup: 0,
            coverage_warmup: 0,
            hybrid_k: None,
        }
    }

    /// Same panel with the |x sin x| covariate term; the pooled OLS proxy is
    /// deliberately misspecified here.
    pub fn table1_nonlinear(replicates: u64, proxy: bool) -> McConfig {
        let mut cfg = table1_linear(replicates, proxy);
        cfg.dgp.kind = DgpKind::PanelNonlinear(PanelParams::default());
        cfg.dgp.seed = 1002;
        cfg
    }

    /// Single series: the panel process with one unit and the covariate and
    /// effect heterogeneity pinned (X = 25, effect = 20).
    pub fn table1_series(replicates: u64) -> McConfig {
        McConfig {
            dgp: DgpSpec {
                kind: DgpKind::PanelLinear(PanelParams {
                    n_units: 1,
                    x_sd: 0.0,
                    mu_sd: 0.0,
                    ..PanelParams::default()
                }),
                seed: 1003,
            },
            engine: EngineSpec {
                design: Design::Timeseries,
                boundary: Boundary::Asymptotic,
                proxy: false,
                config: BoundaryConfig::default(),
            },
            proxy_model: ProxyModel::None,
            horizon: 100,
            replicates,
            detect: DetectRule::NullExclusion,
            warmup: 0,
            coverage_warmup: 0,
            hybrid_k: None,
        }
    }

    /// Comparator study: no dependence, no covariates, halved signal, 5
    /// units, positive-detection stopping, hybrid with 5 scheduled looks.
    pub fn table2(replicates: u64) -> McConfig {
        McConfig {
            dgp: DgpSpec {
                kind: DgpKind::PanelLinear(PanelParams {
                    n_units: 5,
                    beta: 0.0,
                    ar_rho: 0.0,
                    mu: 10.0,
                    ..PanelParams::default()
                }),
                seed: 1004,
            },
            engine: panel_engine(false),
            proxy_model: ProxyModel::None,
            horizon: 100,
            replicates,
            detect: DetectRule::PositiveSignificant,
            warmup: 0,
            coverage_warmup: 0,
            hybrid_k: Some(5),
        }
    }

    /// Binary sign-up stream under the given boundary. The exact and mixture
    /// boundaries get m = M / p_min = 1 / 0.5 = 2.
    pub fn example1(replicates: u64, horizon: u64, boundary: Boundary) -> McConfig {
        let mut config = BoundaryConfig::default();
        if matches!(boundary, Boundary::Exact | Boundary::Mixture) {
            config.m_bound = Some(2.0);
        }
        McConfig {
            dgp: DgpSpec {
                kind: DgpKind::binary_signup(),
                seed: 1005,
            },
            engine: EngineSpec {
                design: Design::Fixed,
                boundary,
                proxy: false,
                config,
            },
            proxy_model: ProxyModel::None,
            horizon,
            replicates,
            detect: DetectRule::NullExclusion,
            warmup: 0,
            coverage_warmup: 0,
            hybrid_k: None,
        }
    }

    /// Novelty-carryover series with the time-varying estimand path.
    pub fn example4(replicates: u64, horizon: u64) -> McConfig {
        McConfig {
            dgp: DgpSpec {
                kind: DgpKind::novelty_carryover(),
                seed: 1006,
            },
            engine: EngineSpec {
                design: Design::Timeseries,
                boundary: Boundary::Asymptotic,
                proxy: false,
                config: BoundaryConfig::default(),
            },
            proxy_model: ProxyModel::None,
            horizon,
            replicates,
            detect: DetectRule::NullExclusion,
            warmup: 0,
            // The first-step effect (500) dwarfs a single-arm variance
            // estimate, so the asymptotic band is degenerate until both arms
            // have been seen; the coverage tally starts once that is near
            // certain.
            coverage_warmup: 20,
            hybrid_k: None,
        }
    }
}
