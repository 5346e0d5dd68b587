//! Estimation samples with saturated score controls and local linear
//! controls for screened tie-breakers.

use std::collections::{BTreeMap, BTreeSet};

use localscore_core::market::{ApplicantId, Market, SchoolId};
use localscore_core::{sector_score, Class, MatchOutcome, ScoreTable};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Design;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameSpec {
    /// Sector tags, one instrument family each; the first is the sector of
    /// interest.
    pub sectors: Vec<String>,
    /// Include the running-variable controls of every screened school.
    #[serde(default = "yes")]
    pub rv_controls: bool,
    /// Covariate holding an integer cohort code. Running-variable controls
    /// are interacted with cohort and cohort dummies are added.
    #[serde(default)]
    pub cohort: Option<String>,
    /// Extra exogenous controls (covariate names).
    #[serde(default)]
    pub covariates: Vec<String>,
    /// Round scores to this granularity before building dummies.
    #[serde(default)]
    pub rounding: Option<f64>,
    /// Keep applicants without risk in any family (they are absorbed by
    /// their score dummies).
    #[serde(default)]
    pub keep_all: bool,
}

fn yes() -> bool {
    true
}

impl FrameSpec {
    pub fn new(sectors: &[&str]) -> Self {
        FrameSpec {
            sectors: sectors.iter().map(|s| s.to_string()).collect(),
            rv_controls: true,
            cohort: None,
            covariates: Vec::new(),
            rounding: None,
            keep_all: false,
        }
    }
}

/// Instrument name of a sector.
pub fn instrument_name(sector: &str) -> String {
    format!("D_{sector}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationFrame {
    pub spec: FrameSpec,
    /// Market positions of the sample rows.
    pub rows: Vec<usize>,
    pub ids: Vec<ApplicantId>,
    /// Assignment dummies, one per sector, over the sample rows.
    pub instruments: Design,
    /// Sector scores per family over the sample rows.
    pub scores: Vec<Vec<f64>>,
    /// Score dummies, then running-variable controls, cohort dummies and
    /// covariates, over the sample rows.
    pub controls: Design,
    /// Applicants left out for having no risk in any family.
    pub no_risk: usize,
    /// Applicants left out for a missing covariate or cohort.
    pub missing_covariates: usize,
}

/// Value of `name` for every applicant, looked up among outcomes, then
/// enrollment, then covariates.
pub fn column(market: &Market<f64>, name: &str) -> Result<Vec<Option<f64>>> {
    let known = market.applicants.iter().any(|a| {
        a.outcomes.contains_key(name) || a.enrollment.contains_key(name) || a.covariates.contains_key(name)
    });
    if !known && !market.applicants.is_empty() {
        return Err(Error::UnknownColumn(name.to_string()));
    }
    Ok(market
        .applicants
        .iter()
        .map(|a| {
            a.outcomes
                .get(name)
                .or_else(|| a.enrollment.get(name))
                .or_else(|| a.covariates.get(name))
                .copied()
        })
        .collect())
}

/// `1[assigned to a school tagged `sector`]` per applicant.
pub fn assignment_dummy(market: &Market<f64>, outcome: &MatchOutcome, sector: &str) -> Result<Vec<f64>> {
    check_outcome(market, outcome)?;
    let tagged: BTreeSet<SchoolId> =
        market.schools.iter().filter(|s| s.tags.contains(sector)).map(|s| s.id).collect();
    if tagged.is_empty() {
        return Err(localscore_core::Error::UnknownLabel(sector.to_string()).into());
    }
    Ok(outcome.assignment.iter().map(|s| if s.is_some_and(|s| tagged.contains(&s)) { 1.0 } else { 0.0 }).collect())
}

fn check_outcome(market: &Market<f64>, outcome: &MatchOutcome) -> Result<()> {
    let same = outcome.applicants.len() == market.applicants.len()
        && outcome.applicants.iter().zip(&market.applicants).all(|(a, b)| *a == b.id);
    if same {
        Ok(())
    } else {
        Err(localscore_core::Error::OutcomeMismatch("outcome applicants differ from market".into()).into())
    }
}

/// Four columns per screened school, in school order: applied (`a_s`),
/// in-window (`k_s`), in-window slope `k (R - tau)` (`slope_s`) and kink
/// `k (R - tau) 1(R > tau)` (`kink_s`). Rows follow market order.
pub fn rv_controls(market: &Market<f64>, outcome: &MatchOutcome, table: &ScoreTable) -> Result<Design> {
    check_outcome(market, outcome)?;
    let n = market.applicants.len();
    let position: BTreeMap<ApplicantId, usize> =
        market.applicants.iter().enumerate().map(|(i, a)| (a.id, i)).collect();
    let screened: Vec<_> = market.schools.iter().filter(|s| !market.is_lottery(s.tie_breaker)).collect();
    let column_of: BTreeMap<SchoolId, usize> = screened.iter().enumerate().map(|(k, s)| (s.id, k)).collect();
    let mut cols = vec![[vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]]; screened.len()];
    for row in &table.rows {
        let Some(&k) = column_of.get(&row.score.school) else { continue };
        let i = *position
            .get(&row.applicant)
            .ok_or(localscore_core::Error::UnknownApplicant(row.applicant))?;
        cols[k][0][i] = 1.0;
        if row.score.class == Class::Conditional {
            let school = screened[k];
            let tau = outcome.cutoffs.get(&school.id).ok_or(localscore_core::Error::UnknownSchool(school.id))?.tau;
            let r = *market.applicants[i]
                .tie_breakers
                .get(&school.tie_breaker)
                .ok_or(localscore_core::Error::UnknownTieBreaker(school.tie_breaker))?;
            let centered = r - tau;
            cols[k][1][i] = 1.0;
            cols[k][2][i] = centered;
            cols[k][3][i] = if r > tau { centered } else { 0.0 };
        }
    }
    let mut design = Design::new();
    for (school, [a, k, slope, kink]) in screened.iter().zip(cols) {
        design.push(format!("a_{}", school.id), a);
        design.push(format!("k_{}", school.id), k);
        design.push(format!("slope_{}", school.id), slope);
        design.push(format!("kink_{}", school.id), kink);
    }
    Ok(design)
}

fn label(x: f64) -> String {
    format!("{x}")
}

impl EstimationFrame {
    pub fn build(market: &Market<f64>, outcome: &MatchOutcome, table: &ScoreTable, spec: &FrameSpec) -> Result<Self> {
        check_outcome(market, outcome)?;
        if spec.sectors.is_empty() {
            return Err(Error::Dimension("at least one sector is needed".into()));
        }
        if let Some(g) = spec.rounding {
            if !(g > 0.0) {
                return Err(Error::Dimension("rounding granularity must be positive".into()));
            }
        }
        let n = market.applicants.len();
        let mut scores = Vec::with_capacity(spec.sectors.len());
        let mut dummies = Vec::with_capacity(spec.sectors.len());
        for sector in &spec.sectors {
            let s = sector_score(table, market, sector)?;
            scores.push(
                s.iter()
                    .map(|x| match spec.rounding {
                        Some(g) => (x.psi / g).round() * g,
                        None => x.psi,
                    })
                    .collect::<Vec<f64>>(),
            );
            dummies.push(assignment_dummy(market, outcome, sector)?);
        }
        let risky: Vec<bool> = (0..n)
            .map(|i| scores.iter().any(|s| localscore_core::has_risk(s[i])))
            .collect();

        let covariates: Vec<Vec<Option<f64>>> =
            spec.covariates.iter().map(|c| column(market, c)).collect::<Result<_>>()?;
        let cohort = spec.cohort.as_deref().map(|c| column(market, c)).transpose()?;

        let mut rows = Vec::new();
        let (mut no_risk, mut missing) = (0, 0);
        for i in 0..n {
            if !spec.keep_all && !risky[i] {
                no_risk += 1;
                continue;
            }
            let complete = covariates.iter().all(|c| c[i].is_some())
                && cohort.as_ref().is_none_or(|c| c[i].is_some());
            if !complete {
                missing += 1;
                continue;
            }
            rows.push(i);
        }
        if rows.is_empty() {
            return Err(Error::Empty("no applicant has risk".into()));
        }

        let pick = |v: &[f64]| rows.iter().map(|&i| v[i]).collect::<Vec<f64>>();
        let mut controls = Design::new();
        for (sector, s) in spec.sectors.iter().zip(&scores) {
            let sample = pick(s);
            let mut values: Vec<f64> = sample.clone();
            values.sort_by(f64::total_cmp);
            values.dedup();
            for x in values {
                controls.push(
                    format!("d_{sector}({})", label(x)),
                    sample.iter().map(|&v| if v == x { 1.0 } else { 0.0 }).collect(),
                );
            }
        }

        let cohorts: Option<(Vec<f64>, Vec<f64>)> = cohort.map(|c| {
            let sample: Vec<f64> = rows.iter().map(|&i| c[i].expect("complete rows")).collect();
            let mut levels = sample.clone();
            levels.sort_by(f64::total_cmp);
            levels.dedup();
            (sample, levels)
        });
        if spec.rv_controls {
            let rv = rv_controls(market, outcome, table)?.select_rows(&rows);
            match &cohorts {
                Some((sample, levels)) if levels.len() > 1 => {
                    for (name, col) in rv.names.iter().zip(&rv.columns) {
                        for &level in levels {
                            controls.push(
                                format!("{name}:cohort({})", label(level)),
                                col.iter().zip(sample).map(|(v, c)| if *c == level { *v } else { 0.0 }).collect(),
                            );
                        }
                    }
                }
                _ => controls.extend(rv),
            }
        }
        if let Some((sample, levels)) = &cohorts {
            for &level in levels.iter().skip(1) {
                controls.push(
                    format!("cohort({})", label(level)),
                    sample.iter().map(|c| if *c == level { 1.0 } else { 0.0 }).collect(),
                );
            }
        }
        for (name, c) in spec.covariates.iter().zip(&covariates) {
            controls.push(name.clone(), rows.iter().map(|&i| c[i].expect("complete rows")).collect());
        }

        let mut instruments = Design::new();
        for (sector, d) in spec.sectors.iter().zip(&dummies) {
            instruments.push(instrument_name(sector), pick(d));
        }
        Ok(EstimationFrame {
            spec: spec.clone(),
            ids: rows.iter().map(|&i| market.applicants[i].id).collect(),
            scores: scores.iter().map(|s| pick(s)).collect(),
            rows,
            instruments,
            controls,
            no_risk,
            missing_covariates: missing,
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Rows whose `values` (over the full market) are all present, as
    /// positions into the frame.
    pub fn observed(&self, values: &[&[Option<f64>]]) -> Vec<usize> {
        (0..self.rows.len())
            .filter(|&r| values.iter().all(|v| v[self.rows[r]].is_some()))
            .collect()
    }
}
