use thiserror::Error;

/// Errors raised by the linear-algebra kernels, the geometries and the optimizers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is not square ({rows}x{cols})")]
    NonSquare { rows: usize, cols: usize },
    #[error("non-finite entry encountered")]
    NotFinite,
    #[error("matrix is not symmetric (asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },
    #[error("matrix is not symmetric positive definite (smallest eigenvalue {min_eig:e})")]
    NotSpd { min_eig: f64 },
    #[error("matrix is rank deficient")]
    RankDeficient,
    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch { expected: (usize, usize), got: (usize, usize) },
    #[error("tangent vectors are based at different points")]
    BasePointMismatch,
    #[error("point is outside the domain of the map: {0}")]
    OutOfDomain(String),
    #[error("tangent is not horizontal (|U^T xi| = {residual:e})")]
    NotHorizontal { residual: f64 },
    #[error("matrix is not orthonormal (|U^T U - I| = {residual:e})")]
    NotOrthonormal { residual: f64 },
    #[error("inverse transport is nearly singular (largest principal angle {angle:.4} rad)")]
    NearSingular { angle: f64 },
    #[error("line search failed after {trials} trials")]
    LineSearchFailed { trials: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("infeasible sampling: {0}")]
    InfeasibleSampling(String),
}

pub type Result<T> = std::result::Result<T, Error>;
