use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("degree overflow: {left} + {right} > 7")]
    DegreeOverflow { left: usize, right: usize },
    #[error("operation needs a form of positive degree")]
    DegreeUnderflow,
    #[error("degree mismatch: {left} vs {right}")]
    DegreeMismatch { left: usize, right: usize },
    #[error("coefficient vector has length {got}, expected {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("metric is not positive definite")]
    NonPositiveMetric,
    #[error("3-form is not positive{}", point.map(|p| format!(" at grid point {p}")).unwrap_or_default())]
    NonPositiveForm { point: Option<usize> },
    #[error("2-form has a Omega^2_7 component of size {residual:e}")]
    NotIn14 { residual: f64 },
    #[error("constraint violated: {0}")]
    ConstraintViolated(String),
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("band limit {band} exceeds half the smallest active dimension {limit}")]
    BandLimitTooHigh { band: usize, limit: usize },
    #[error("snapshot format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("solver did not converge in {max_iter} iterations (residual {last_residual:e})")]
    NoConvergence { max_iter: usize, last_residual: f64 },
    #[error("precondition failed: {0}")]
    PreconditionFailed(String),
    #[error("form is not closed (residual {residual:e})")]
    NotClosed { residual: f64 },
    #[error("positivity lost after {halvings} step halvings")]
    PositivityLost { halvings: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
