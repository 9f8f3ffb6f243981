use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The sampling weights sum to (numerically) zero: the current span
    /// already fits every point.
    #[error("degenerate sampling weights (total {total:e})")]
    DegenerateWeights { total: f64 },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("inlier count floor((1 - alpha) * n) is zero for n = {n}, alpha = {alpha}")]
    EmptyInlierSet { n: usize, alpha: f64 },

    #[error("combinatorial budget exceeded: {required:e} > {budget:e}")]
    BudgetExceeded { required: f64, budget: f64 },

    #[error("affine sample size {size} exceeds the partition cap of {cap}; use a larger eta")]
    PartitionCap { size: usize, cap: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
