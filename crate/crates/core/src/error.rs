//! Error type shared across the library.

use thiserror::Error;

/// Library-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration value (bad dimension, radius ordering, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// Data that cannot be processed (zero-variance feature column, empty set).
    #[error("degenerate data: {0}")]
    DegenerateData(String),

    /// Shape mismatch between operands.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// Operation requested for a model family that does not support it.
    #[error("unsupported model: {0}")]
    UnsupportedModel(String),

    /// Optimizer diverged or produced a non-finite objective.
    #[error("optimization failure after {iters} iterates: {reason}")]
    OptimizationFailure { reason: String, iters: usize },

    /// Bootstrap ensemble with failed members.
    #[error("ensemble failure, failed member indices {failed:?}")]
    EnsembleFailure { failed: Vec<usize> },

    /// Sampler driven into a non-finite state.
    #[error("invalid sampler state: {0}")]
    InvalidState(String),

    /// Curvature matrix not positive definite even after jitter escalation.
    #[error("curvature degenerate: {0}")]
    CurvatureDegenerate(String),

    /// Stochastic optimization produced a non-finite objective.
    #[error("divergence at step {step}: {reason}")]
    Divergence { reason: String, step: usize },

    /// Projection of the zero vector onto a sphere.
    #[error("projection undefined for the zero vector")]
    ProjectionUndefined,

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// Malformed file contents.
    #[error("parse error in {path}: {reason}")]
    Parse { path: String, reason: String },
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            reason: reason.into(),
        }
    }

    /// Process exit code for the CLI: 2 usage, 3 data, 4 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::DegenerateData(_)
            | Error::DimensionMismatch(_)
            | Error::Io { .. }
            | Error::Parse { .. } => 3,
            Error::UnsupportedModel(_)
            | Error::OptimizationFailure { .. }
            | Error::EnsembleFailure { .. }
            | Error::InvalidState(_)
            | Error::CurvatureDegenerate(_)
            | Error::Divergence { .. }
            | Error::ProjectionUndefined => 4,
        }
    }
}
