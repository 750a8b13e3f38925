use thiserror::Error;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{what}: non-finite value at index {index}")]
    NonFinite { what: &'static str, index: usize },

    #[error("{what}: entry {index} is {value}, expected a strictly positive value")]
    NotPositive {
        what: &'static str,
        index: usize,
        value: f64,
    },

    #[error("marginal sums to {sum}, expected 1")]
    NotNormalized { sum: f64 },

    #[error("{what}: expected dimension {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("{what}: empty dimension")]
    Empty { what: &'static str },

    #[error("regularization weight must be positive, got {0}")]
    InvalidLambda(f64),

    #[error("row sum {index} deviates from its marginal by {defect}")]
    InfeasiblePlan { index: usize, defect: f64 },

    #[error("plan entry {value} at index {index} is below the representable range")]
    DegeneratePlan { index: usize, value: f64 },

    #[error("symmetric factorization failed (smallest pivot {smallest_pivot})")]
    Factorization { smallest_pivot: f64 },

    #[error("dense system is numerically singular")]
    Singular,

    #[error("{what} of size {size} exceeds the oracle limit {limit}")]
    OracleTooLarge {
        what: &'static str,
        size: usize,
        limit: usize,
    },

    #[error("trajectory holds {found} snapshots, expected {expected}")]
    IncompleteTrajectory { expected: usize, found: usize },

    #[error("finite-difference step vanishes at coordinate {coordinate}")]
    StepUnderflow { coordinate: usize },

    #[error("loss does not provide an exact Hessian bound")]
    UnsupportedLoss,

    #[error("invalid grid: {0}")]
    InvalidGrid(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(&'static str),

    #[error("could not allocate {bytes} bytes for the trajectory")]
    Allocation { bytes: usize },
}
