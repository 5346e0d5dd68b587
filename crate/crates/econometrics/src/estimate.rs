//! Balance checks and score-controlled 2SLS on an estimation frame.

use localscore_core::market::Market;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{column, EstimationFrame};
use crate::linalg::{ols, two_stage_least_squares, Coefficient, Controls, Design, IvFit, OlsFit};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceRow {
    pub covariate: String,
    /// Score-controlled coefficients on every assignment dummy, sector of
    /// interest first.
    pub controlled: OlsFit,
    /// Difference in means by assignment to the sector of interest, all
    /// applicants with the covariate, no controls.
    pub raw: OlsFit,
}

impl BalanceRow {
    pub fn gamma(&self) -> &Coefficient {
        &self.controlled.coefficients[0]
    }

    pub fn raw_difference(&self) -> &Coefficient {
        &self.raw.coefficients[0]
    }
}

fn subset(values: &[Option<f64>], rows: &[usize]) -> Vec<f64> {
    rows.iter().map(|&i| values[i].expect("observed row")).collect()
}

/// Controls restricted to frame positions `keep` (refactored only when
/// rows were lost).
fn controls_for(frame: &EstimationFrame, keep: &[usize], full: &Controls) -> Result<Controls> {
    if keep.len() == frame.len() {
        Ok(full.clone())
    } else {
        Controls::new(&frame.controls.select_rows(keep), keep.len())
    }
}

fn intercept(n: usize) -> Design {
    Design::new().with("const", vec![1.0; n])
}

/// Regressions of each covariate on the assignment dummies with the frame's
/// controls, plus the raw difference in means over the whole market.
pub fn balance_regression(
    frame: &EstimationFrame,
    market: &Market<f64>,
    assignment: &[f64],
    covariates: &[String],
) -> Result<Vec<BalanceRow>> {
    if assignment.len() != market.applicants.len() {
        return Err(Error::Dimension("assignment dummy length differs from market".into()));
    }
    let full = Controls::new(&frame.controls, frame.len())?;
    let columns: Vec<Vec<Option<f64>>> = covariates.iter().map(|c| column(market, c)).collect::<Result<_>>()?;
    covariates
        .par_iter()
        .zip(&columns)
        .map(|(name, values)| {
            let keep = frame.observed(&[values]);
            if keep.is_empty() {
                return Err(Error::Empty(format!("covariate `{name}` is missing for the whole sample")));
            }
            let w: Vec<f64> = keep.iter().map(|&r| values[frame.rows[r]].expect("observed")).collect();
            let controls = controls_for(frame, &keep, &full)?;
            let controlled = ols(&w, &frame.instruments.select_rows(&keep), &controls)?;

            let everyone: Vec<usize> = (0..values.len()).filter(|&i| values[i].is_some()).collect();
            let all_w = subset(values, &everyone);
            let d: Vec<f64> = everyone.iter().map(|&i| assignment[i]).collect();
            let focus = Design::new().with(frame.instruments.names[0].clone(), d);
            let raw = ols(&all_w, &focus, &Controls::new(&intercept(everyone.len()), everyone.len())?)?;
            Ok(BalanceRow { covariate: name.clone(), controlled, raw })
        })
        .collect()
}

/// Follow-up by assignment status for one outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attrition {
    pub outcome: String,
    pub instrument: String,
    /// (applicants, with outcome) among the assigned.
    pub assigned: (usize, usize),
    /// (applicants, with outcome) among the rest.
    pub unassigned: (usize, usize),
}

impl Attrition {
    pub fn follow_up_rates(&self) -> (f64, f64) {
        let rate = |(n, k): (usize, usize)| if n == 0 { f64::NAN } else { k as f64 / n as f64 };
        (rate(self.assigned), rate(self.unassigned))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub outcome: String,
    pub treatments: Vec<String>,
    /// Score-controlled 2SLS (with first stages and the matching OLS).
    pub iv: IvFit,
    /// OLS of the outcome on the treatments, an intercept and the frame's
    /// covariates over every applicant, without score controls.
    pub benchmark: OlsFit,
    pub attrition: Attrition,
}

/// Score-controlled 2SLS of `outcome` on `treatments`, instrumented by the
/// frame's assignment dummies. Rows missing the outcome or a treatment are
/// dropped and counted in the attrition report.
pub fn estimate(
    frame: &EstimationFrame,
    market: &Market<f64>,
    outcome: &str,
    treatments: &[String],
) -> Result<EstimateReport> {
    let y_all = column(market, outcome)?;
    let c_all: Vec<Vec<Option<f64>>> = treatments.iter().map(|t| column(market, t)).collect::<Result<_>>()?;
    let mut required: Vec<&[Option<f64>]> = vec![&y_all];
    required.extend(c_all.iter().map(Vec::as_slice));
    let keep = frame.observed(&required);

    let d0 = &frame.instruments.columns[0];
    let mut attrition = Attrition {
        outcome: outcome.to_string(),
        instrument: frame.instruments.names[0].clone(),
        assigned: (0, 0),
        unassigned: (0, 0),
    };
    for (r, &i) in frame.rows.iter().enumerate() {
        let slot = if d0[r] == 1.0 { &mut attrition.assigned } else { &mut attrition.unassigned };
        slot.0 += 1;
        if y_all[i].is_some() {
            slot.1 += 1;
        }
    }
    if keep.is_empty() {
        return Err(Error::Empty(format!("no risk-sample applicant has `{outcome}` and every treatment")));
    }

    let full = Controls::new(&frame.controls, frame.len())?;
    let controls = controls_for(frame, &keep, &full)?;
    let y: Vec<f64> = keep.iter().map(|&r| y_all[frame.rows[r]].expect("observed")).collect();
    let mut c = Design::new();
    for (name, col) in treatments.iter().zip(&c_all) {
        c.push(name.clone(), keep.iter().map(|&r| col[frame.rows[r]].expect("observed")).collect());
    }
    let iv = two_stage_least_squares(&y, &c, &frame.instruments.select_rows(&keep), &controls)?;

    // benchmark over everyone with the outcome, treatments and covariates
    let cov_all: Vec<Vec<Option<f64>>> =
        frame.spec.covariates.iter().map(|c| column(market, c)).collect::<Result<_>>()?;
    let everyone: Vec<usize> = (0..market.applicants.len())
        .filter(|&i| required.iter().all(|v| v[i].is_some()) && cov_all.iter().all(|v| v[i].is_some()))
        .collect();
    let mut bench_controls = intercept(everyone.len());
    for (name, v) in frame.spec.covariates.iter().zip(&cov_all) {
        bench_controls.push(name.clone(), subset(v, &everyone));
    }
    let mut bench_focus = Design::new();
    for (name, col) in treatments.iter().zip(&c_all) {
        bench_focus.push(name.clone(), subset(col, &everyone));
    }
    let benchmark = ols(
        &subset(&y_all, &everyone),
        &bench_focus,
        &Controls::new(&bench_controls, everyone.len())?,
    )?;
    Ok(EstimateReport { outcome: outcome.to_string(), treatments: treatments.to_vec(), iv, benchmark, attrition })
}
