use thiserror::Error;

/// Broad classification used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Malformed or inconsistent input.
    Validation,
    /// Input was well formed but a numerical precondition failed.
    Numerical,
    /// An iterative solver did not reach its tolerance.
    NotConverged,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("duplicate atom: rows {first} and {second} are identical")]
    DuplicateAtom { first: usize, second: usize },

    #[error("weight at index {index} must be positive and finite, got {value}")]
    NonPositiveWeight { index: usize, value: f64 },

    #[error("weights sum to {sum}, which is not within 1e-9 of 1")]
    WeightSum { sum: f64 },

    #[error("non-finite coordinate at row {row}, column {column}")]
    NonFinite { row: usize, column: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("matrix is not positive semidefinite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositiveSemidefinite { min_eigenvalue: f64 },

    #[error("matrix is singular (smallest eigenvalue {min_eigenvalue:e})")]
    Singular { min_eigenvalue: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("size limit exceeded: {0}")]
    TooLarge(String),

    #[error("solver did not converge: residual {residual:e} after {iterations} iterations")]
    NotConverged { residual: f64, iterations: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("every scenario failed; first error: {0}")]
    AllScenariosFailed(Box<Error>),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::NotPositiveSemidefinite { .. }
            | Error::Singular { .. }
            | Error::Numerical(_) => ErrorKind::Numerical,
            Error::NotConverged { .. } => ErrorKind::NotConverged,
            Error::AllScenariosFailed(inner) => inner.kind(),
            _ => ErrorKind::Validation,
        }
    }

    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

impl From<csv::Error> for Error {
    fn from(err: csv::Error) -> Self {
        Error::Parse(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
