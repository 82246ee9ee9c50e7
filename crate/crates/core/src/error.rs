use thiserror::Error;

use crate::lp::LpStatus;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("empty sample")]
    EmptySample,
    #[error("unknown hypothesis {0}")]
    UnknownHypothesis(usize),
    #[error("empty hypothesis set")]
    EmptyHypothesisSet,
    #[error("empty ball")]
    EmptyBall,
    #[error("malformed program: {0}")]
    MalformedProgram(String),
    #[error("invalid budget {0}: must lie in [0, 1]")]
    InvalidBudget(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid target {0}: must lie in (0, 1]")]
    InvalidTarget(f64),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("degenerate abstention distribution")]
    DegenerateAbstention,
    #[error("linear program ended with status {0:?}")]
    LpFailed(LpStatus),
    #[error("LP round-off of {0:e} exceeds the clamping tolerance")]
    RoundOff(f64),
    #[error("no-halt within cap of {0} rounds")]
    NoHalt(u32),
    #[error("inconsistent realizable run: version space emptied in epoch {0}")]
    InconsistentRealizable(usize),
    #[error("parse error: {0}")]
    Parse(String),
}
