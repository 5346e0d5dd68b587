//! Score-controlled regression: covariate balance, OLS benchmarks and 2SLS
//! with saturated local-score dummies and local linear controls for
//! screened tie-breakers.

pub mod error;
pub mod estimate;
pub mod frame;
pub mod linalg;

pub use error::{Error, Result};
pub use estimate::{balance_regression, estimate, Attrition, BalanceRow, EstimateReport};
pub use frame::{assignment_dummy, column, instrument_name, rv_controls, EstimationFrame, FrameSpec};
pub use linalg::{ols, two_stage_least_squares, Coefficient, Controls, Design, FirstStage, IvFit, OlsFit, ThinQr};
