//! Error type shared by every module in the crate.

use thiserror::Error;

/// Failure modes of parameter validation, quadrature, and the solvers.
#[derive(Debug, Error)]
pub enum CknError {
    /// Inputs outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Two discrete functions live on different grids.
    #[error("grid mismatch: operands were sampled on different grids")]
    GridMismatch,

    /// An operation restricted to one angular mode got the wrong mode.
    #[error("mode error: {0}")]
    Mode(String),

    /// The discrete domain is too short to host the requested configuration.
    #[error("grid too narrow: {0}")]
    GridTooNarrow(String),

    /// A root search found no sign change over the scanned window.
    #[error("bracket error: {0}")]
    Bracket(String),

    /// An iteration exhausted its budget without meeting its tolerance.
    #[error("no convergence: {0}")]
    Convergence(String),

    /// The bordered (constrained) linear system is numerically singular.
    #[error("singular bordered system: {0}")]
    SingularBordered(String),

    /// Every optimizer start failed to produce a descent direction.
    #[error("no descent: {0}")]
    NoDescent(String),
}

pub type Result<T> = std::result::Result<T, CknError>;
