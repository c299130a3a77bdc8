use thiserror::Error;

/// Failures raised by grid construction and the numerical operations.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// Two grids or arrays that must agree in shape do not.
    #[error("shape mismatch: {0}")]
    Shape(String),
    /// A grid or dual grid is unsuitable for the requested computation.
    #[error("configuration error: {0}")]
    Config(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    /// An input function failed a precondition check (convexity, normalization).
    #[error("input rejected: {0}")]
    Input(String),
    /// A callee broke the contract it was handed.
    #[error("contract violation: {0}")]
    Contract(String),
}

pub type Result<T> = std::result::Result<T, Error>;
