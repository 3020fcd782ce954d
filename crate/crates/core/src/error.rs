use alloc::string::String;

use crate::ids::Tick;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("no candidate: {0}")]
    NoCandidate(&'static str),
    #[error("no data: {0}")]
    NoData(&'static str),
    #[error("illegal state: {0}")]
    IllegalState(String),
    #[error("invariant violated at tick {tick}: {detail}")]
    InvariantViolation { tick: Tick, detail: String },
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
