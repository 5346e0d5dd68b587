//! Synthetic markets and a Monte Carlo oracle for the local DA score.

pub mod dist;
pub mod economy;
pub mod fixtures;
pub mod error;
pub mod oracle;
pub mod sweep;
pub mod synth;

pub use dist::{ks_statistic, TieBreakerDist};
pub use economy::{CdfFamily, Economy, EconomyType, MarketTemplate};
pub use error::{Error, Result};
pub use oracle::{comparison_se, mc_score, replicate_rng, Comparison, OracleCell, OracleConfig, OracleResult};
pub use synth::{generate, missing_strata, OutcomeSpec, SchoolSpec, SynthConfig, SynthTruth};
pub use sweep::{convergence_sweep, rate_warnings, SweepConfig, SweepReport, SweepStep};
