use thiserror::Error;

/// Errors produced by chain construction and the numerical routines built on it.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("rate matrix must be square and non-empty")]
    NotSquare,

    #[error("negative or non-finite rate {value} at ({x}, {y})")]
    NegativeRate { x: usize, y: usize, value: f64 },

    #[error("rate matrix has non-zero diagonal entry at state {0}")]
    NonZeroDiagonal(usize),

    #[error("rate support is not symmetric at ({x}, {y})")]
    AsymmetricSupport { x: usize, y: usize },

    #[error("chain is reducible: state {0} is not reachable from state 0")]
    ReducibleChain(usize),

    #[error("detailed balance violated at ({x}, {y}): residual {residual:e}")]
    DetailedBalanceViolation { x: usize, y: usize, residual: f64 },

    #[error("invalid stationary measure: {0}")]
    InvalidMeasure(String),

    #[error("invalid density: {0}")]
    InvalidDensity(String),

    #[error("negative time {0}")]
    NegativeTime(f64),

    #[error("operation requires a strictly positive density")]
    BoundaryDensity,

    #[error("logarithmic mean of negative argument ({0}, {1})")]
    NegativeArgument(f64, f64),

    #[error("tangent vector has non-zero mean {0:e}")]
    NonZeroMean(f64),

    #[error("edge weights disconnect the graph")]
    SingularWeights,

    #[error("generalized eigenproblem is degenerate")]
    DegeneratePencil,

    #[error("optimizer failure: {0}")]
    OptimizerFailure(String),

    #[error("state space of size {size} exceeds the limit {limit}")]
    StateSpaceTooLarge { size: usize, limit: usize },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("diameter must be positive, got {0}")]
    NonPositiveDiameter(f64),

    #[error("epsilon must lie in (0, 1), got {0}")]
    InvalidEpsilon(f64),

    #[error("curvature must be positive, got {0}")]
    NonPositiveKappa(f64),

    #[error("unknown state {0}")]
    UnknownState(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
