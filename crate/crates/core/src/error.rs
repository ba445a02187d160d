//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by model construction, training, decoding, and IO.
#[derive(Debug, Error)]
pub enum Error {
    /// A constructor or operation received a value outside its documented
    /// domain (non-stochastic row, unsorted means, zero-length series, ...).
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Two inputs that must agree in shape do not.
    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    /// The requested model variant needs a component this model or call does
    /// not provide (per-bin tables, a selector chain, ...).
    #[error("unsupported variant: {0}")]
    UnsupportedVariant(String),

    /// Maximum-likelihood estimation cannot produce a valid model from the
    /// given data and configuration.
    #[error("estimation failed: {0}")]
    Estimation(String),

    /// The exact decoder's enumeration space exceeds its guard.
    #[error("search space of {size:.3e} assignments exceeds the exact-decoder guard of {guard:.3e}")]
    SearchSpaceExceeded { size: f64, guard: f64 },

    /// A data file is malformed; `line` is 1-based within the file.
    #[error("{path}:{line}: {msg}")]
    DataFormat {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    /// An internal invariant was violated; indicates a bug, not bad input.
    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;
