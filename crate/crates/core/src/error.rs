use thiserror::Error;

use crate::model::State;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("parameter `{0}` must be strictly positive and finite")]
    NonPositiveParameter(&'static str),
    #[error("both server pools need at least one server")]
    ZeroServers,
    #[error("state {0} is outside the state space of this table")]
    IndexOutOfSpace(State),
    #[error("difference tables are only defined for optimal value tables")]
    NotOptimal,
    #[error("R1 is undefined when mu1 == mu2 (zero slope)")]
    DegenerateSlope,
    #[error("no sign change of D found for index {index} below search cap {cap}")]
    CapExceeded { index: u32, cap: u32 },
    #[error("decision at queue length {q} needs level {} but the table stops at {i_max}", .q - 1)]
    DepthExceeded { q: u32, i_max: u32 },
    #[error("threshold search needs levels up to {needed} but the table stops at {i_max}")]
    TableTooShallow { needed: u32, i_max: u32 },
    #[error("no event can fire in non-empty state {0}")]
    StuckState(State),
    #[error("invalid decision context: {0}")]
    InvalidContext(String),
    #[error("unknown policy id `{0}`")]
    UnknownPolicy(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, Error>;
