//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Dimension or length of an input does not match what the operation needs.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A matrix that must be symmetric positive definite is not.
    #[error("matrix not positive definite: {0}")]
    NotPositiveDefinite(String),

    /// A scalar or vector argument is outside the operation's domain.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// An EP site update produced a non-integrable intermediate.
    #[error("site update failed: {0}")]
    SiteUpdate(String),

    /// An iterative scheme hit its iteration budget without converging.
    #[error("did not converge: {0}")]
    NoConvergence(String),

    /// Quadrature oracles only support random-effect dimension 1 or 2.
    #[error("unsupported oracle dimension {0} (tensor quadrature is limited to d <= 2)")]
    OracleDimension(usize),

    /// Malformed input file.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
