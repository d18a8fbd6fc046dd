use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is numerically singular (pivot column {pivot_col})")]
    SingularMatrix { pivot_col: usize },
    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },
    #[error("matrix has rank {rank} but {cols} columns")]
    RankDeficient { rank: usize, cols: usize },
    #[error("matrix is not positive definite (smallest eigenvalue {lambda_min:e})")]
    NotPositiveDefinite { lambda_min: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("row {row} of H has (near) zero norm")]
    ZeroRow { row: usize },
    #[error("row {row} of the patch is inconsistent with the preceding rows (residual {residual:e})")]
    InconsistentPatch { row: usize, residual: f64 },
    #[error("the intersection of all affine sets is empty (least-squares case)")]
    EmptyIntersection,
    #[error("graph is not strongly connected")]
    NotStronglyConnected,
    #[error("invalid graph signal: {0}")]
    InvalidSignal(String),
    #[error("the 1/t flow cannot be evaluated at t = 0")]
    TimeZeroDecay,
    #[error("state diverged or became non-finite at t = {t}")]
    NonFiniteState { t: f64 },
    #[error("invalid integrator configuration: {0}")]
    InvalidConfig(String),
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),
}
