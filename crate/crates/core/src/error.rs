use thiserror::Error;

use crate::flow::FlowState;

/// Errors reported by the numerical routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("mode ({kx}, {ky}) lies outside the ball of radius {cutoff}")]
    OutsideBall { kx: i32, ky: i32, cutoff: u32 },

    #[error("grid with {points} points per axis is too coarse; at least {required} are needed")]
    GridTooSmall { points: usize, required: usize },

    #[error("cutoff mismatch: expected {expected}, found {found}")]
    CutoffMismatch { expected: u32, found: u32 },

    #[error("enumeration of about {requested} terms exceeds the budget of {budget}")]
    BudgetExceeded { requested: f64, budget: f64 },

    #[error("non-finite value produced by sample {index}")]
    NonFiniteSample { index: usize },

    #[error("non-finite coefficient")]
    NonFiniteInput,

    #[error("sample index {index} is outside 0..{count}")]
    IndexOutOfRange { index: usize, count: usize },

    #[error("flow produced a non-finite value at step {step}")]
    Diverged { step: usize, last_good: Box<FlowState> },

    #[error("degenerate denominator: {0}")]
    DegenerateDenominator(&'static str),

    #[error("invalid tree: {0}")]
    InvalidTree(String),

    #[error("decoration violates the tree constraints: {0}")]
    InvalidDecoration(String),

    #[error("trajectory does not start from the given initial datum: {0}")]
    TrajectoryMismatch(String),

    #[error("none of the {count} samples passed the energy cutoff")]
    NoAcceptedSamples { count: usize },

    #[error("scan did not converge: {0}")]
    NotConverged(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter { name, reason: reason.into() }
}
