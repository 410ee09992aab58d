use thiserror::Error;

use crate::sim::Trajectory;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(
        "matrix is not Hurwitz (max real part {max_real:.3e}); Lyapunov equation has no positive definite solution"
    )]
    NotHurwitz { max_real: f64 },

    #[error("{0} is not symmetric positive definite")]
    NotPositiveDefinite(&'static str),

    #[error("pair (A, B) is not stabilizable: uncontrollable mode at {re:.6} {im:+.6}i")]
    NotStabilizable { re: f64, im: f64 },

    #[error("value out of range: {0}")]
    Range(String),

    #[error("expected {expected} {what}, got {got}")]
    Arity {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("convex weights sum to {0}, expected 1")]
    WeightSum(f64),

    #[error("{subsets} submatrices exceed the enumeration budget of {budget}; use the sampled estimate")]
    BudgetExceeded { subsets: u128, budget: u128 },

    #[error("recovery bound requires delta < sqrt(2) - 1, got {0}")]
    BoundInapplicable(f64),

    #[error("physical CSD mode requires a measurement model")]
    MissingModel,

    #[error("design invariant violated: {0}")]
    Invariant(String),

    #[error("trajectory diverged at t = {time} (|x| = {norm:.3e})")]
    Diverged {
        time: f64,
        norm: f64,
        partial: Box<Trajectory>,
    },
}
