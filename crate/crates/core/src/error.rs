//! Error type shared by every module of the crate.

use thiserror::Error;

/// Errors produced by model construction, solvers and I/O.
#[derive(Debug, Error)]
pub enum Error {
    /// A value violated a documented invariant of a domain type.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A physical quantity was outside the domain of the formula (zero distance, negative power, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// The absorption samples in the requested band are not monotone in the fitted direction.
    #[error("slope region mismatch: {0}")]
    RegionMismatch(String),

    /// Too few samples to perform the requested operation.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// Evaluation was requested outside the range covered by tabulated data.
    #[error("extrapolation outside data range: {0}")]
    Extrapolation(String),

    /// A precondition of an operation does not hold.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// No allocation satisfies the constraints; `constraint` names the binding one.
    #[error("infeasible ({constraint}): {detail}")]
    Infeasible { constraint: String, detail: String },

    /// The problem mode does not match the requested algorithm or absorption fit.
    #[error("mode mismatch: {0}")]
    ModeMismatch(String),

    /// Exhaustive enumeration would exceed the configured cap.
    #[error("enumeration cap exceeded: {count} candidates > cap {cap}")]
    CapExceeded { count: u128, cap: u64 },

    /// Numerical failure inside a solver (singular system, non-finite iterate).
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Malformed or inconsistent configuration.
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
