use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] localscore_core::Error),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("empty schedule")]
    EmptySchedule,
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
