//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by curve processing, fusion, evaluation and file I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty score list")]
    EmptyCurve,

    #[error("non-finite score at index {index}")]
    NonFinite { index: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("empty codebook")]
    EmptyCodebook,

    #[error("query has no true match in gallery")]
    NoTrueMatch,

    #[error("query has no false match in gallery")]
    NoFalseMatch,

    /// Malformed or inconsistent input data (duplicate entries, ragged
    /// coverage, mismatched id universes, unknown ids).
    #[error("data contract violation: {0}")]
    DataContract(String),

    /// A computed value violated an internal invariant; indicates a bug.
    #[error("internal invariant violated: {0}")]
    Internal(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
