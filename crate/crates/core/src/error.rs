//! Error types shared across the crate.

use thiserror::Error;

/// Library-wide error type.
///
/// Variants map onto the failure classes a caller can act on: bad input,
/// a closed spectral gap, a solver that failed to converge, a locality
/// bound that did not hold, and resource guards on dense materialization.
#[derive(Debug, Error)]
pub enum CoreError {
    /// Invalid configuration or arguments.
    #[error("config error: {0}")]
    Config(String),

    /// Spectral gap below the safe threshold; transport is ill-defined.
    #[error("gap closed: {0}")]
    GapClosed(String),

    /// An iterative or linear solver failed to converge.
    #[error("solver failure: {0}")]
    Solver(String),

    /// A decay or confinement bound was violated.
    #[error("confinement violation: {0}")]
    Confinement(String),

    /// An operation would materialize a matrix beyond the dense cap.
    #[error("support too large: {0}")]
    SupportTooLarge(String),

    /// Mesh or cover construction failed a structural check.
    #[error("mesh error: {0}")]
    Mesh(String),

    /// Serialization round-trip failure.
    #[error("serialization error: {0}")]
    Serialization(String),
}

pub type Result<T> = std::result::Result<T, CoreError>;
