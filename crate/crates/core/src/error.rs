use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("regularization order must satisfy 2 < p < inf, got {0}")]
    InvalidOrder(f64),

    #[error("non-finite input {0}")]
    NonFinite(f64),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("adaptive quadrature did not converge: estimate {estimate}, error {error:e}")]
    Quadrature { estimate: f64, error: f64 },

    #[error("root bracket could not be established for target {0}")]
    Bracket(f64),

    #[error("invalid monotone function: {0}")]
    Monotone(String),

    #[error("degenerate nonlinearity sum: slope vanishes on interval {index}")]
    DegenerateSum { index: usize },

    #[error("invalid mesh: {0}")]
    Mesh(String),

    #[error("invalid diffusion field: {0}")]
    Diffusion(String),

    #[error("invalid measure: {0}")]
    Measure(String),

    #[error("point ({x}, {y}) lies outside every mesh triangle")]
    PointOutside { x: f64, y: f64 },

    #[error("entropy residual requires an L1 right-hand side; measure has singular parts")]
    SingularMeasure,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("inner minimization did not converge after {iterations} iterations (residual {residual:e})")]
    InnerNotConverged { iterations: usize, residual: f64 },

    #[error("linear solver failed: {0}")]
    LinearSolver(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
