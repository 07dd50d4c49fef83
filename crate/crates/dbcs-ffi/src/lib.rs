//! C ABI over the dbcs engine: opaque handles, plain structs, integer status
//! codes. Every function is safe to call from any language with a C FFI; all
//! pointers are checked for null and no panic crosses the boundary.

use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use dbcs::engine::{Boundary, CsEngine, Design, EngineSpec};
use dbcs::stream::{BoundaryConfig, Observation, SnapshotRecord, StreamState};
use dbcs::DbcsError;

/// Status codes returned by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DbcsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidParameter = 2,
    PositivityViolation = 3,
    DataQuality = 4,
    BoundExceeded = 5,
    NumericalFailure = 6,
    SnapshotInvalid = 7,
    ParseError = 8,
    Panic = 9,
}

/// Experimental designs, matching the library enum.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DbcsDesign {
    Fixed = 0,
    Bandit = 1,
    Timeseries = 2,
    Panel = 3,
}

/// Boundary families, matching the library enum.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DbcsBoundary {
    Exact = 0,
    Asymptotic = 1,
    Mixture = 2,
}

/// One stream record. `has_yhat != 0` marks a present proxy prediction.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct DbcsObservation {
    pub unit_id: u64,
    pub time: u64,
    pub arm: u8,
    pub has_yhat: u8,
    pub outcome: f64,
    pub p1: f64,
    pub yhat: f64,
}

/// One emitted confidence band.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct DbcsBand {
    pub step: u64,
    pub center: f64,
    pub half_width: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Opaque engine handle. Create with `dbcs_engine_new`, destroy with
/// `dbcs_engine_free`. Not thread-safe; one stream per handle.
pub struct DbcsEngine {
    inner: CsEngine,
    last_error: CString,
}

fn classify(e: &DbcsError) -> DbcsStatus {
    match e {
        DbcsError::Positivity { .. } => DbcsStatus::PositivityViolation,
        DbcsError::NonFinite { .. } | DbcsError::MissingPrediction | DbcsError::EmptyBatch => {
            DbcsStatus::DataQuality
        }
        DbcsError::InvalidParameter(_) => DbcsStatus::InvalidParameter,
        DbcsError::InvalidSnapshot(_) => DbcsStatus::SnapshotInvalid,
        DbcsError::EstimateExceedsBound { .. } => DbcsStatus::BoundExceeded,
        DbcsError::Numerical { .. } => DbcsStatus::NumericalFailure,
        DbcsError::Parse { .. } => DbcsStatus::ParseError,
    }
}

impl DbcsEngine {
    fn fail(&mut self, e: DbcsError) -> DbcsStatus {
        let status = classify(&e);
        self.last_error = CString::new(e.to_string()).unwrap_or_default();
        status
    }
}

fn obs_from_c(o: &DbcsObservation) -> Observation {
    Observation {
        unit_id: o.unit_id,
        time: o.time,
        arm: o.arm,
        outcome: o.outcome,
        p1: o.p1,
        prediction: if o.has_yhat != 0 { Some(o.yhat) } else { None },
    }
}

fn band_to_c(b: &dbcs::stream::ConfidenceBand) -> DbcsBand {
    DbcsBand {
        step: b.step,
        center: b.center,
        half_width: b.half_width,
        lower: b.lower,
        upper: b.upper,
    }
}

/// Create an engine. `m_bound` and `rho` use NaN (or any non-positive value)
/// as "unset"; the exact and mixture boundaries require a positive `m_bound`.
///
/// # Safety
/// `out` must be a valid pointer to write one engine pointer through.
#[no_mangle]
pub unsafe extern "C" fn dbcs_engine_new(
    design: DbcsDesign,
    boundary: DbcsBoundary,
    proxy: u8,
    alpha: f64,
    eta: f64,
    m_bound: f64,
    rho: f64,
    out: *mut *mut DbcsEngine,
) -> DbcsStatus {
    if out.is_null() {
        return DbcsStatus::NullPointer;
    }
    let spec = EngineSpec {
        design: match design {
            DbcsDesign::Fixed => Design::Fixed,
            DbcsDesign::Bandit => Design::Bandit,
            DbcsDesign::Timeseries => Design::Timeseries,
            DbcsDesign::Panel => Design::Panel,
        },
        boundary: match boundary {
            DbcsBoundary::Exact => Boundary::Exact,
            DbcsBoundary::Asymptotic => Boundary::Asymptotic,
            DbcsBoundary::Mixture => Boundary::Mixture,
        },
        proxy: proxy != 0,
        config: BoundaryConfig {
            alpha,
            eta,
            m_bound: if m_bound.is_finite() && m_bound > 0.0 { Some(m_bound) } else { None },
            rho: if rho.is_finite() && rho > 0.0 { Some(rho) } else { None },
        },
    };
    match CsEngine::new(spec) {
        Ok(inner) => {
            *out = Box::into_raw(Box::new(DbcsEngine {
                inner,
                last_error: CString::default(),
            }));
            DbcsStatus::Ok
        }
        Err(e) => {
            *out = ptr::null_mut();
            classify(&e)
        }
    }
}

/// Destroy an engine. Null is a no-op.
///
/// # Safety
/// `engine` must be null or a pointer returned by `dbcs_engine_new` that has
/// not been freed yet.
#[no_mangle]
pub unsafe extern "C" fn dbcs_engine_free(engine: *mut DbcsEngine) {
    if !engine.is_null() {
        drop(Box::from_raw(engine));
    }
}

/// Fold one step (one record, or one record per unit for the panel design)
/// and write the resulting band.
///
/// # Safety
/// `engine` must be a live engine, `records` must point to `len` valid
/// observations, `out_band` must be writable (or null to skip the band).
#[no_mangle]
pub unsafe extern "C" fn dbcs_engine_step(
    engine: *mut DbcsEngine,
    records: *const DbcsObservation,
    len: usize,
    out_band: *mut DbcsBand,
) -> DbcsStatus {
    let Some(eng) = engine.as_mut() else {
        return DbcsStatus::NullPointer;
    };
    if records.is_null() && len > 0 {
        return DbcsStatus::NullPointer;
    }
    let slice = if len == 0 {
        &[][..]
    } else {
        std::slice::from_raw_parts(records, len)
    };
    let obs: Vec<Observation> = slice.iter().map(obs_from_c).collect();
    let result = catch_unwind(AssertUnwindSafe(|| eng.inner.step(&obs)));
    match result {
        Ok(Ok(band)) => {
            if !out_band.is_null() {
                *out_band = band_to_c(&band);
            }
            DbcsStatus::Ok
        }
        Ok(Err(e)) => eng.fail(e),
        Err(_) => DbcsStatus::Panic,
    }
}

/// Write the current band without folding anything.
///
/// # Safety
/// `engine` must be a live engine and `out_band` writable.
#[no_mangle]
pub unsafe extern "C" fn dbcs_engine_band(
    engine: *mut DbcsEngine,
    out_band: *mut DbcsBand,
) -> DbcsStatus {
    let Some(eng) = engine.as_mut() else {
        return DbcsStatus::NullPointer;
    };
    if out_band.is_null() {
        return DbcsStatus::NullPointer;
    }
    match catch_unwind(AssertUnwindSafe(|| eng.inner.band())) {
        Ok(Ok(band)) => {
            *out_band = band_to_c(&band);
            DbcsStatus::Ok
        }
        Ok(Err(e)) => eng.fail(e),
        Err(_) => DbcsStatus::Panic,
    }
}

/// Number of folded steps.
///
/// # Safety
/// `engine` must be a live engine.
#[no_mangle]
pub unsafe extern "C" fn dbcs_engine_n_steps(engine: *const DbcsEngine) -> u64 {
    engine.as_ref().map_or(0, |e| e.inner.state().n_steps())
}

/// Whether the current band contains `tau` (1) or not (0), via `out`.
///
/// # Safety
/// `engine` must be a live engine and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dbcs_engine_covers(
    engine: *mut DbcsEngine,
    tau: f64,
    out: *mut u8,
) -> DbcsStatus {
    let Some(eng) = engine.as_mut() else {
        return DbcsStatus::NullPointer;
    };
    if out.is_null() {
        return DbcsStatus::NullPointer;
    }
    match catch_unwind(AssertUnwindSafe(|| eng.inner.covers(tau))) {
        Ok(Ok(c)) => {
            *out = c as u8;
            DbcsStatus::Ok
        }
        Ok(Err(e)) => eng.fail(e),
        Err(_) => DbcsStatus::Panic,
    }
}

/// Serialize the engine state as a JSON checkpoint. Free the returned string
/// with `dbcs_string_free`.
///
/// # Safety
/// `engine` must be a live engine and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dbcs_engine_snapshot_json(
    engine: *mut DbcsEngine,
    out: *mut *mut c_char,
) -> DbcsStatus {
    let Some(eng) = engine.as_mut() else {
        return DbcsStatus::NullPointer;
    };
    if out.is_null() {
        return DbcsStatus::NullPointer;
    }
    let record = eng.inner.state().snapshot();
    match serde_json::to_string(&record) {
        Ok(json) => match CString::new(json) {
            Ok(c) => {
                *out = c.into_raw();
                DbcsStatus::Ok
            }
            Err(_) => DbcsStatus::SnapshotInvalid,
        },
        Err(_) => DbcsStatus::SnapshotInvalid,
    }
}

/// Replace the engine state from a JSON checkpoint produced by
/// `dbcs_engine_snapshot_json` under the same engine configuration.
///
/// # Safety
/// `engine` must be a live engine and `json` a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn dbcs_engine_restore_json(
    engine: *mut DbcsEngine,
    json: *const c_char,
) -> DbcsStatus {
    let Some(eng) = engine.as_mut() else {
        return DbcsStatus::NullPointer;
    };
    if json.is_null() {
        return DbcsStatus::NullPointer;
    }
    let Ok(text) = CStr::from_ptr(json).to_str() else {
        return DbcsStatus::ParseError;
    };
    let record: SnapshotRecord = match serde_json::from_str(text) {
        Ok(r) => r,
        Err(e) => {
            return eng.fail(DbcsError::InvalidSnapshot(e.to_string()));
        }
    };
    match StreamState::restore(&record) {
        Ok(state) => match CsEngine::with_state(*eng.inner.spec(), state) {
            Ok(inner) => {
                eng.inner = inner;
                DbcsStatus::Ok
            }
            Err(e) => eng.fail(e),
        },
        Err(e) => eng.fail(e),
    }
}

/// Free a string returned by this library. Null is a no-op.
///
/// # Safety
/// `s` must be null or a string returned by this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn dbcs_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Copy the last error message into `buf` (truncated, always NUL-terminated).
/// Returns the untruncated length in bytes, excluding the NUL.
///
/// # Safety
/// `engine` must be a live engine; `buf` must hold `cap` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn dbcs_engine_last_error(
    engine: *const DbcsEngine,
    buf: *mut c_char,
    cap: usize,
) -> usize {
    let Some(eng) = engine.as_ref() else {
        return 0;
    };
    let bytes = eng.last_error.as_bytes();
    if !buf.is_null() && cap > 0 {
        let n = bytes.len().min(cap - 1);
        ptr::copy_nonoverlapping(bytes.as_ptr(), buf as *mut u8, n);
        *buf.add(n) = 0;
    }
    bytes.len()
}

/// Mixture scale minimizing the width proxy at step `t_star`; writes through
/// `out`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dbcs_tune_eta(alpha: f64, t_star: u64, out: *mut f64) -> DbcsStatus {
    if out.is_null() {
        return DbcsStatus::NullPointer;
    }
    match dbcs::tune_eta(alpha, t_star) {
        Ok(choice) => {
            *out = choice.eta;
            DbcsStatus::Ok
        }
        Err(e) => classify(&e),
    }
}
