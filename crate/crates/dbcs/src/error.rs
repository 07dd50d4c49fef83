use thiserror::Error;

/// Errors surfaced by the confidence-sequence library.
#[derive(Debug, Error)]
pub enum DbcsError {
    /// An assignment probability left the open interval (0, 1).
    #[error("positivity violation (Assumption 1): p1 = {p1} must lie strictly inside (0, 1)")]
    Positivity { p1: f64 },

    /// A record carried a NaN or infinite value.
    #[error("data quality: non-finite {field} = {value}")]
    NonFinite { field: &'static str, value: f64 },

    /// A prediction was required but missing.
    #[error("proxy estimator requires a prediction on every record")]
    MissingPrediction,

    /// A parameter fell outside its stated domain.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A snapshot failed validation on restore.
    #[error("invalid snapshot: {0}")]
    InvalidSnapshot(String),

    /// A per-record estimate exceeded the configured bound m = M / p_min.
    #[error("record estimate |{tau_hat}| exceeds m = {m}; M or p_min was misdeclared")]
    EstimateExceedsBound { tau_hat: f64, m: f64 },

    /// An empty batch was handed to a per-step operation.
    #[error("empty batch: each step needs at least one record")]
    EmptyBatch,

    /// A numerical routine failed to converge.
    #[error("numerical failure in {routine}: {detail}")]
    Numerical { routine: &'static str, detail: String },

    /// Malformed input on the stream surface.
    #[error("parse error at line {line}: {detail}")]
    Parse { line: usize, detail: String },
}

pub type Result<T> = std::result::Result<T, DbcsError>;
