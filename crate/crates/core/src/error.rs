use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("negative entry in {0}")]
    Negative(&'static str),

    #[error("feature row {row} has zero norm")]
    ZeroNormRow { row: usize },

    #[error("{0} is empty")]
    Empty(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("cost matrix is not normalized to [0, 1] (max {max})")]
    NotNormalized { max: f64 },

    #[error("no consistent anchors")]
    NoConsistentAnchors,

    #[error("size guard exceeded: {0}")]
    TooLarge(String),

    /// A plan puts mass on a row or column whose reference mass is zero, so
    /// the KL marginal penalty is +inf.
    #[error("solver did not converge within {iterations} iterations")]
    NotConverged { iterations: usize },

    #[error("plan is infeasible against a zero-mass marginal")]
    InfeasibleMarginal,
}
