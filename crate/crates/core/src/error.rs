use thiserror::Error;

/// Errors raised by the reduction machinery.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("point outside the domain: {0}")]
    DomainViolation(String),

    #[error("Hessian could not be factorized at the queried point")]
    SingularHessian,

    #[error("point is critical for H (gradient norm {grad_norm:e})")]
    AtCriticalPoint { grad_norm: f64 },

    #[error("Jacobian is rank deficient (singular values ratio {ratio:e})")]
    RankDeficient { ratio: f64 },

    #[error("tangent space lies in the kernel of dH (|J^T grad H| = {diagnostic:e})")]
    NonTransversal { diagnostic: f64 },

    #[error("invalid rate matrix: {0}")]
    BadRateMatrix(String),

    #[error("integration failed at step {step}: {cause}")]
    StepFailure { step: usize, cause: Box<Error> },

    #[error("arc {arc}: dH/ds = {derivative:e} below monotonicity floor at s = {s}")]
    MonotonicityFloorViolated { arc: String, s: f64, derivative: f64 },

    #[error("not a tree: {0}")]
    NotATree(String),

    #[error("no witness: projector is orthogonal in the Shahshahani metric")]
    NoWitness,

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

impl Error {
    /// Short machine-readable tag, used in CLI reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::NotPositiveDefinite(_) => "not-positive-definite",
            Error::DimensionMismatch { .. } => "dimension-mismatch",
            Error::DomainViolation(_) => "domain-violation",
            Error::SingularHessian => "singular-hessian",
            Error::AtCriticalPoint { .. } => "at-critical-point",
            Error::RankDeficient { .. } => "rank-deficient",
            Error::NonTransversal { .. } => "non-transversal",
            Error::BadRateMatrix(_) => "bad-rate-matrix",
            Error::StepFailure { .. } => "step-failure",
            Error::MonotonicityFloorViolated { .. } => "monotonicity-floor-violated",
            Error::NotATree(_) => "not-a-tree",
            Error::NoWitness => "no-witness",
            Error::InvalidInput(_) => "invalid-input",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
