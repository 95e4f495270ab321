use thiserror::Error;

use crate::oracle::BinSolution;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("malformed allocation: {0}")]
    MalformedAllocation(String),

    #[error("{constraint} constraint violated by {violation:.3e}")]
    ConstraintViolation {
        constraint: &'static str,
        violation: f64,
    },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("grid size mismatch: {left} vs {right}")]
    GridMismatch { left: usize, right: usize },

    #[error(
        "covariance is not positive definite (pivot {pivot} = {value:.3e}); \
         floor the input spectrum at a small positive value"
    )]
    IndefiniteCovariance { pivot: usize, value: f64 },

    #[error(
        "bin oracle did not converge after {iterations} iterations \
         (last objective change {objective_change:.3e})"
    )]
    NotConverged {
        iterations: usize,
        objective_change: f64,
        last: Box<BinSolution>,
    },

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
