//! Convergence of estimated local scores to finite-market scores as the
//! market grows and the bandwidth shrinks.

use localscore_core::{estimate_local_score, run_da, BandwidthSpec, MarketIndex, ScoreContext};
use serde::{Deserialize, Serialize};

use crate::economy::Economy;
use crate::error::{Error, Result};
use crate::oracle::{mc_score, OracleConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    /// (market size, bandwidth) steps in order.
    pub schedule: Vec<(usize, f64)>,
    pub draws: u32,
    pub seed: u64,
    /// Cells with fewer replicate occupancies are not compared.
    pub min_occupancy: u64,
}

impl SweepConfig {
    /// `delta_N = N^(-1/3)` at each size.
    pub fn cube_root(sizes: &[usize], draws: u32, seed: u64) -> Self {
        SweepConfig {
            schedule: sizes.iter().map(|&n| (n, (n as f64).powf(-1.0 / 3.0).min(1.0))).collect(),
            draws,
            seed,
            min_occupancy: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepStep {
    pub n: usize,
    pub delta: f64,
    /// Largest |estimate - oracle frequency| over compared (type, cell, school).
    pub sup_deviation: f64,
    /// Binomial SE of the oracle frequency attaining the sup.
    pub sup_se: f64,
    pub compared: usize,
    /// Occupied cells skipped because their classification cannot arise
    /// under the realized cutoffs.
    pub unreachable: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub steps: Vec<SweepStep>,
    /// Rate-condition problems with the schedule.
    pub warnings: Vec<String>,
    /// Steps whose sup deviation exceeds the previous step's.
    pub inversions: usize,
    /// Whether every inversion lies within 2 combined SEs.
    pub inversions_within_2se: bool,
    /// Least-squares slope of ln(sup deviation) on ln(N); negative when
    /// deviations shrink.
    pub log_slope: Option<f64>,
}

impl SweepReport {
    /// Weakly decreasing, allowing one inversion within 2 SE.
    pub fn is_decreasing(&self) -> bool {
        self.inversions == 0 || (self.inversions == 1 && self.inversions_within_2se)
    }
}

/// Checks `delta_N -> 0` and `N delta_N -> infinity` along the schedule.
pub fn rate_warnings(schedule: &[(usize, f64)]) -> Vec<String> {
    let mut out = Vec::new();
    for w in schedule.windows(2) {
        let ((n0, d0), (n1, d1)) = (w[0], w[1]);
        if n1 <= n0 {
            out.push(format!("market size does not grow from {n0} to {n1}"));
        }
        if d1 > d0 {
            out.push(format!("bandwidth grows from {d0} to {d1} at N = {n1}"));
        }
        if n1 as f64 * d1 <= n0 as f64 * d0 {
            out.push(format!("N * delta does not grow from N = {n0} to N = {n1}"));
        }
    }
    out
}

/// For each step: sample a market of the given size, estimate local scores
/// from one realized match, and compare them with oracle frequencies on the
/// same market (same types and capacities, tie-breakers redrawn).
pub fn convergence_sweep(economy: &Economy, config: &SweepConfig) -> Result<SweepReport> {
    if config.schedule.is_empty() {
        return Err(Error::EmptySchedule);
    }
    if config.schedule.iter().any(|&(_, d)| !(d > 0.0 && d <= 1.0)) {
        return Err(Error::Config("bandwidths must lie in (0, 1]".into()));
    }
    let mut steps = Vec::with_capacity(config.schedule.len());
    for (k, &(n, delta)) in config.schedule.iter().enumerate() {
        let seed = config.seed.wrapping_add(k as u64);
        let template = economy.sample(n, seed)?;
        let outcome = run_da(&template.market)?;
        let table = estimate_local_score(&template.market, &outcome, &BandwidthSpec::Uniform(delta))?;
        let index = MarketIndex::new(&template.market)?;
        let cutoffs: Vec<_> = index.school_ids.iter().map(|s| outcome.cutoffs[s].clone()).collect();
        let deltas: Vec<f64> = index.school_ids.iter().map(|s| table.delta(*s)).collect();
        let ctx = ScoreContext::new(&index, &cutoffs, &deltas);

        let mut oracle = OracleConfig::new(config.draws, delta, seed);
        oracle.per_school = index.school_ids.iter().map(|s| (*s, table.delta(*s))).collect();
        let result = mc_score(&template, &oracle)?;

        let (cmp, unreachable) = result.compare_estimate(&ctx, config.min_occupancy, f64::INFINITY)?;
        let step = SweepStep {
            n,
            delta,
            sup_deviation: cmp.sup_deviation,
            sup_se: cmp.sup_se,
            compared: cmp.compared,
            unreachable,
        };
        steps.push(step);
    }

    let mut inversions = 0;
    let mut within = true;
    for w in steps.windows(2) {
        if w[1].sup_deviation > w[0].sup_deviation {
            inversions += 1;
            let se = (w[0].sup_se.powi(2) + w[1].sup_se.powi(2)).sqrt();
            within &= w[1].sup_deviation - w[0].sup_deviation <= 2.0 * se;
        }
    }
    let points: Vec<(f64, f64)> = steps
        .iter()
        .filter(|s| s.sup_deviation > 0.0)
        .map(|s| ((s.n as f64).ln(), s.sup_deviation.ln()))
        .collect();
    let log_slope = (points.len() >= 2).then(|| {
        let m = points.len() as f64;
        let (mx, my) = points.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0 / m, a.1 + p.1 / m));
        let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
        if sxx > 0.0 { sxy / sxx } else { 0.0 }
    });
    Ok(SweepReport {
        steps,
        warnings: rate_warnings(&config.schedule),
        inversions,
        inversions_within_2se: within,
        log_slope,
    })
}
