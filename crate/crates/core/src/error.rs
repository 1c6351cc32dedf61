//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced by model parsing, catalog lookup, and the numeric layers.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    /// A numeric argument lies outside the function's domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// The model formula could not be parsed.
    #[error("parse error at byte {position}: {message}")]
    Parse { position: usize, message: String },

    /// The formula parsed but describes a classification outside the catalog.
    #[error("unsupported model: {0}")]
    UnsupportedModel(String),

    /// A required design parameter (level count or replicate count) is missing.
    #[error("missing parameter: {0}")]
    MissingParameter(String),

    /// A variance component required by the test plan was not supplied.
    #[error("missing variance component: {0}")]
    MissingComponent(String),

    /// Fixed-effect values violate the zero-mean identifiability constraints.
    #[error("effect constraint violation: {0}")]
    ConstraintViolation(String),

    /// An exact-test operation was invoked on a model that only admits an
    /// approximate F-test.
    #[error("model {0} has no exact F-test; {1}")]
    ApproximateModel(String, String),

    /// No admissible design can reach the requested power.
    #[error("infeasible request: {0}")]
    Infeasible(String),

    /// Simulated data does not match the declared design shape.
    #[error("shape mismatch: expected {expected} observations, got {got}")]
    ShapeMismatch { expected: usize, got: usize },

    /// A quasi-F mean-square combination degenerated to zero.
    #[error("degenerate statistic: {0}")]
    Degenerate(String),

    /// Catch-all input validation failure.
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
