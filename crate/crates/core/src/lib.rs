//! Deferred acceptance with mixed lottery and screened tie-breaking, and
//! closed-form local propensity scores computed from a single realized match.
//!
//! All algorithms are generic over [`Scalar`]; the aliases at the crate root
//! fix the scalar to `f64`, and [`exact`] provides the same types over
//! [`Rational`] for bit-exact checks.

pub mod da;
pub mod error;
pub mod global;
pub mod index;
pub mod market;
pub mod scalar;
pub mod score;

pub use da::{run_da, run_serial_dictatorship, verify_stability, StabilityViolation, UNASSIGNED};
pub use error::{Error, Result};
pub use global::{check_cdf, da_global_score, sd_global_score, Cdf, UniformCdf};
pub use index::{Entry, MarketIndex, INELIGIBLE};
pub use market::{
    group_types, position, scale_raw_tiebreaker, validate_market, ApplicantId, ApplicantType, Capacity,
    Priority, School, SchoolId, TieBreakerId, ValidationReport, Violation, Warning,
};
pub use scalar::Scalar;
pub use score::{
    classify, default_bandwidth, estimate_local_score, has_risk, lambda, local_score, m_count, sector_score,
    sigma, BandwidthRule, BandwidthSpec, Class, LocalScoreInput, ScoreContext, ScoreScratch,
};

pub type Rational = num_rational::Rational64;

pub type Market = market::Market<f64>;
pub type Applicant = market::Applicant<f64>;
pub type MatchOutcome = da::MatchOutcome<f64>;
pub type Cutoff = da::Cutoff<f64>;
pub type ScoreTable = score::ScoreTable<f64>;
pub type SchoolScore = score::SchoolScore<f64>;
pub type SectorScore = score::SectorScore<f64>;

/// The same types over exact rationals.
pub mod exact {
    use super::Rational;

    pub type Market = crate::market::Market<Rational>;
    pub type Applicant = crate::market::Applicant<Rational>;
    pub type MatchOutcome = crate::da::MatchOutcome<Rational>;
    pub type Cutoff = crate::da::Cutoff<Rational>;
    pub type ScoreTable = crate::score::ScoreTable<Rational>;
}
