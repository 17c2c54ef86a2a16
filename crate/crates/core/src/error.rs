use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("risk level must lie strictly inside (0, 1), got {0}")]
    InvalidRiskLevel(f64),

    #[error("sample batch is empty")]
    EmptySamples,

    #[error("sample value at index {index} is not finite: {value}")]
    NonFiniteSample { index: usize, value: f64 },

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("point is infeasible by {violation:e}")]
    Infeasible { violation: f64 },

    #[error("projection onto this feasible set is not supported")]
    ProjectionUnsupported,

    #[error("vector field returned a non-finite value at iteration {iteration} (component {component})")]
    NonFiniteField { iteration: usize, component: usize },

    #[error("no complementary solution found along path")]
    RayTermination,

    #[error("pivot budget of {0} exhausted")]
    PivotBudget(usize),

    #[error("solver did not converge: {0}")]
    NotConverged(String),

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("od pair ({origin}, {destination}) has only {found} simple paths, {requested} requested")]
    NotEnoughPaths {
        origin: usize,
        destination: usize,
        found: usize,
        requested: usize,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
