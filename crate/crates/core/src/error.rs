//! Error type shared by every module.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("solver did not converge after {iterations} iterations (last residual {residual:e})")]
    Convergence { residual: f64, iterations: usize },

    #[error("degenerate denominator: omega_avg*R = {value:e} is below the tip-speed guard")]
    DegenerateDenominator { value: f64 },

    #[error("invalid maneuver spec: {0}")]
    InvalidSpec(String),

    #[error("pool grammar error: {0}")]
    Grammar(String),

    #[error("ill-conditioned regressor matrix (rcond {rcond:e}); offending column: {column}")]
    Conditioning { column: String, rcond: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("training diverged at epoch {epoch}: {detail}")]
    Divergence { epoch: usize, detail: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("ensemble needs at least {needed} members, has {have}")]
    InsufficientEnsemble { needed: usize, have: usize },

    #[error("invalid split policy: {0}")]
    InvalidPolicy(String),

    #[error("degenerate normalization range: {0}")]
    DegenerateRange(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("enforcement failed: {0}")]
    Enforcement(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Process exit code for the CLI: 1 usage/schema/IO, 2 numerical, 3 enforcement.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Convergence { .. }
            | Error::DegenerateDenominator { .. }
            | Error::Conditioning { .. }
            | Error::Divergence { .. }
            | Error::InsufficientData(_)
            | Error::InsufficientEnsemble { .. }
            | Error::DegenerateRange(_) => 2,
            Error::Enforcement(_) => 3,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
