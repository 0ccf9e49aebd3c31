use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid lattice: {0}")]
    InvalidLattice(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: {what} (expected {expected}, got {got})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("matrix is not positive definite after jitter (dimension {dim})")]
    NotPositiveDefinite { dim: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("MFM series for V_{p}({m}) not converged: relative tail {tail:e} at L_max = {l_max}")]
    TruncationTail {
        p: usize,
        m: usize,
        l_max: usize,
        tail: f64,
    },

    #[error("empty draw list")]
    EmptyDraws,

    #[error("numerical failure at iteration {iteration}: {source}")]
    Iteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

impl Error {
    /// True for failures of the numerics (as opposed to bad input or I/O).
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::NotPositiveDefinite { .. } | Error::NonFinite(_) | Error::TruncationTail { .. } => true,
            Error::Iteration { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
