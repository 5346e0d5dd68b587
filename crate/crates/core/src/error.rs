use thiserror::Error;

use crate::market::{ApplicantId, SchoolId, TieBreakerId};

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid market: {}", .0.join("; "))]
    InvalidMarket(Vec<String>),
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("value not representable in scalar type")]
    Overflow,
    #[error("applicant {applicant} has no value for tie-breaker {tie_breaker}")]
    MissingTieBreaker {
        applicant: ApplicantId,
        tie_breaker: TieBreakerId,
    },
    #[error("unknown school {0}")]
    UnknownSchool(SchoolId),
    #[error("unknown applicant {0}")]
    UnknownApplicant(ApplicantId),
    #[error("unknown tie-breaker {0}")]
    UnknownTieBreaker(TieBreakerId),
    #[error("serial dictatorship requires {0}")]
    NotSerialDictatorship(&'static str),
    #[error("outcome does not belong to this market: {0}")]
    OutcomeMismatch(String),
    #[error("no school carries sector label {0:?}")]
    UnknownLabel(String),
    #[error("invalid distribution: {0}")]
    InvalidCdf(String),
    #[error("invalid bandwidth {0}")]
    InvalidBandwidth(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
