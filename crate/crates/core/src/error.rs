use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("constraint system has no solution (least-squares residual {residual:.3e})")]
    InfeasibleConstraint { residual: f64 },

    #[error("constraint has full rank {rank}; the feasible set is the single point {point:?}")]
    DegenerateConstraint { rank: usize, point: Vec<f64> },

    #[error("invalid spectrum bounds [{floor}, {ceil}]")]
    BadSpectrum { floor: f64, ceil: f64 },

    #[error("node rates must sum to zero, got {sum:.3e}")]
    InfeasibleRates { sum: f64 },

    #[error("graph is disconnected")]
    DisconnectedGraph,

    #[error("local problems have mismatched dimensions: {0:?}")]
    MismatchedDims(Vec<usize>),

    #[error("no convergence after {iterations} iterations (stationarity {stationarity:.3e})")]
    NoConvergence { iterations: usize, stationarity: f64 },

    #[error("point is infeasible (residual {residual:.3e})")]
    InfeasiblePoint { residual: f64 },

    #[error("schedule gap {gap} exceeds the allowed {allowed}")]
    GapViolation { gap: usize, allowed: usize },

    #[error("step size too large: eta * L = {eta_l:.4} > 1/2")]
    StepTooLarge { eta_l: f64 },

    #[error("non-finite iterate at iteration {iter}")]
    NonFiniteIterate { iter: u64 },

    #[error("delta = {delta} is outside [0, 1)")]
    DeltaOutOfRange { delta: f64 },

    #[error("theta = {theta} is outside (2 delta, 1 + delta] for delta = {delta}")]
    ThetaOutOfRange { theta: f64, delta: f64 },

    #[error("argument outside domain: {0}")]
    DomainError(String),

    #[error("counter `{column}` decreased from {prev} to {next}")]
    MonotonicityViolation { column: &'static str, prev: u64, next: u64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("snapshot format error: {0}")]
    Snapshot(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
