use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid material: {0}")]
    InvalidMaterial(String),

    #[error("shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: String, actual: String },

    #[error("linear solver failed after {iterations} iterations (relative residual {residual:.3e})")]
    SolverFailure { iterations: usize, residual: f64 },

    #[error("matrix is not positive definite (pivot {pivot} = {value:.3e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("optimality-criteria update needs non-positive sensitivities, element {index} has {value:.3e}")]
    MonotonicityViolation { index: usize, value: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn shape(expected: impl ToString, actual: impl ToString) -> Self {
        Error::Shape {
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command-line tool.
    ///
    /// 2 = usage or validation, 3 = data or format, 4 = numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidMaterial(_) | Error::InvalidInput(_) | Error::Shape { .. } => 2,
            Error::Format(_) | Error::Manifest(_) | Error::Io { .. } => 3,
            Error::SolverFailure { .. }
            | Error::NotPositiveDefinite { .. }
            | Error::MonotonicityViolation { .. }
            | Error::UndefinedMetric(_)
            | Error::NonFinite(_) => 4,
        }
    }
}
