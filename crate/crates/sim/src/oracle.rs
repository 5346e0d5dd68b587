//! Monte Carlo assignment probabilities.
//!
//! Every replicate redraws all tie-breakers, reruns deferred acceptance and
//! classifies each applicant against that replicate's own cutoffs. Hits are
//! tallied per (type, classification vector, school) cell. Alongside the
//! frequency, each cell keeps the average of the plug-in local score
//! computed from each replicate's cutoffs.

use std::collections::BTreeMap;

use localscore_core::da::deferred_acceptance;
use localscore_core::market::{ApplicantType, SchoolId};
use localscore_core::{group_types, Class, MarketIndex, ScoreContext, ScoreScratch, UNASSIGNED};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dist::TieBreakerDist;
use crate::economy::MarketTemplate;
use crate::error::{Error, Result};

/// Replicates per work unit. Results are merged unit by unit in order, so
/// they do not depend on the number of threads.
const BLOCK: u32 = 32;
/// Work units evaluated between merges; bounds memory.
const BATCH: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    pub draws: u32,
    /// Bandwidth at screened schools.
    pub delta: f64,
    /// Per-school overrides of `delta`.
    #[serde(default)]
    pub per_school: BTreeMap<SchoolId, f64>,
    pub seed: u64,
    /// Condition on the classification vector as well as the type.
    #[serde(default = "yes")]
    pub condition_on_class: bool,
    /// Also average each replicate's own local scores per cell (costs a
    /// score evaluation per applicant and replicate).
    #[serde(default)]
    pub plug_in: bool,
}

fn yes() -> bool {
    true
}

impl OracleConfig {
    pub fn new(draws: u32, delta: f64, seed: u64) -> Self {
        OracleConfig { draws, delta, per_school: BTreeMap::new(), seed, condition_on_class: true, plug_in: false }
    }
}

/// Tallies for one (type, classification vector) cell over the type's
/// ranked schools.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleCell {
    /// Index into [`OracleResult::types`].
    pub kind: usize,
    /// Empty when the oracle does not condition on classes.
    pub classes: Vec<Class>,
    /// Applicant-replicates that fell in the cell.
    pub occupancy: u64,
    /// Assignments per ranked school.
    pub hits: Vec<u64>,
    /// Sum of plug-in local scores per ranked school.
    pub plug_in_sum: Vec<f64>,
}

impl OracleCell {
    pub fn frequency(&self, k: usize) -> f64 {
        self.hits[k] as f64 / self.occupancy as f64
    }

    /// Binomial standard error of the frequency.
    pub fn standard_error(&self, k: usize) -> f64 {
        let p = self.frequency(k);
        (p * (1.0 - p) / self.occupancy as f64).sqrt()
    }

    pub fn plug_in_mean(&self, k: usize) -> f64 {
        self.plug_in_sum[k] / self.occupancy as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub draws: u32,
    pub types: Vec<ApplicantType>,
    /// Sorted by type, then classification vector.
    pub cells: Vec<OracleCell>,
}

/// Outcome of comparing cell frequencies against reference scores.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    /// (cell, school) pairs compared.
    pub compared: usize,
    /// Pairs outside `z` standard errors.
    pub failures: usize,
    pub sup_deviation: f64,
    /// Standard error of the pair attaining the sup.
    pub sup_se: f64,
    pub max_z: f64,
}

impl Comparison {
    pub fn failure_rate(&self) -> f64 {
        if self.compared == 0 {
            0.0
        } else {
            self.failures as f64 / self.compared as f64
        }
    }
}

/// Standard error used in comparisons: binomial at the observed frequency,
/// or at the reference value when the frequency is degenerate (0 or 1).
pub fn comparison_se(freq: f64, reference: f64, n: u64) -> f64 {
    let p = if freq <= 0.0 || freq >= 1.0 { reference.clamp(0.0, 1.0) } else { freq };
    (p * (1.0 - p) / n as f64).sqrt()
}

impl OracleResult {
    pub fn cell(&self, kind: &ApplicantType, classes: &[Class]) -> Option<&OracleCell> {
        let k = self.types.iter().position(|t| t == kind)?;
        self.cells.iter().find(|c| c.kind == k && c.classes == classes)
    }

    /// Compares every cell with at least `min_occupancy` draws against
    /// `reference(type, classes)`, which returns one score per ranked
    /// school or `None` to skip the cell.
    pub fn compare(
        &self,
        min_occupancy: u64,
        z: f64,
        mut reference: impl FnMut(&ApplicantType, &[Class]) -> Option<Vec<f64>>,
    ) -> Comparison {
        let mut out = Comparison::default();
        for cell in self.cells.iter().filter(|c| c.occupancy >= min_occupancy) {
            let Some(psi) = reference(&self.types[cell.kind], &cell.classes) else {
                continue;
            };
            for (k, &want) in psi.iter().enumerate() {
                let freq = cell.frequency(k);
                let dev = (freq - want).abs();
                let se = comparison_se(freq, want, cell.occupancy);
                out.compared += 1;
                let zk = if se > 0.0 { dev / se } else if dev > 0.0 { f64::INFINITY } else { 0.0 };
                if zk > z {
                    out.failures += 1;
                }
                out.max_z = out.max_z.max(zk);
                if dev > out.sup_deviation {
                    out.sup_deviation = dev;
                    out.sup_se = se;
                }
            }
        }
        out
    }

    /// Compares frequencies with local scores evaluated from fixed cutoffs
    /// (usually those of one realized match). Cells whose classification is
    /// unreachable under those cutoffs are skipped and counted.
    pub fn compare_estimate(
        &self,
        ctx: &ScoreContext<'_, f64>,
        min_occupancy: u64,
        z: f64,
    ) -> Result<(Comparison, usize)> {
        let mut unreachable = 0;
        let mut failed = None;
        let cmp = self.compare(min_occupancy, z, |kind, classes| {
            match ctx.reachable(kind, classes) {
                Ok(true) => {}
                Ok(false) => {
                    unreachable += 1;
                    return None;
                }
                Err(e) => {
                    failed = Some(e);
                    return None;
                }
            }
            match ctx.score_type(kind, classes) {
                Ok(scores) => Some(scores.iter().map(|s| s.psi).collect()),
                Err(e) => {
                    failed = Some(e);
                    None
                }
            }
        });
        match failed {
            Some(e) => Err(e.into()),
            None => Ok((cmp, unreachable)),
        }
    }

    /// Compares frequencies with the replicate-averaged plug-in scores
    /// (requires [`OracleConfig::plug_in`]).
    pub fn compare_plug_in(&self, min_occupancy: u64, z: f64) -> Comparison {
        let by_key: BTreeMap<(usize, &[Class]), &OracleCell> =
            self.cells.iter().map(|c| ((c.kind, c.classes.as_slice()), c)).collect();
        let index_of: BTreeMap<&ApplicantType, usize> =
            self.types.iter().enumerate().map(|(i, t)| (t, i)).collect();
        self.compare(min_occupancy, z, |t, classes| {
            let cell = by_key[&(index_of[t], classes)];
            Some((0..cell.hits.len()).map(|k| cell.plug_in_mean(k)).collect())
        })
    }
}

#[derive(Debug, Clone)]
struct CellAcc {
    code: u64,
    occupancy: u64,
    hits: Vec<u64>,
    plug_in: Vec<f64>,
}

#[derive(Debug, Clone)]
struct Acc {
    applicants: Vec<Vec<CellAcc>>,
}

impl Acc {
    fn new(n: usize) -> Self {
        Acc { applicants: vec![Vec::new(); n] }
    }

    fn cell(&mut self, i: usize, code: u64, len: usize) -> &mut CellAcc {
        let cells = &mut self.applicants[i];
        let k = match cells.iter().position(|c| c.code == code) {
            Some(k) => k,
            None => {
                cells.push(CellAcc { code, occupancy: 0, hits: vec![0; len], plug_in: vec![0.0; len] });
                cells.len() - 1
            }
        };
        &mut cells[k]
    }

    fn merge(&mut self, other: Acc) {
        for (i, cells) in other.applicants.into_iter().enumerate() {
            for c in cells {
                let dst = self.cell(i, c.code, c.hits.len());
                dst.occupancy += c.occupancy;
                for (d, s) in dst.hits.iter_mut().zip(&c.hits) {
                    *d += s;
                }
                for (d, s) in dst.plug_in.iter_mut().zip(&c.plug_in) {
                    *d += s;
                }
            }
        }
    }
}

fn encode(classes: &[Class]) -> u64 {
    classes.iter().fold(0u64, |acc, c| {
        acc * 3
            + match c {
                Class::Never => 0,
                Class::Always => 1,
                Class::Conditional => 2,
            }
    })
}

fn decode(mut code: u64, len: usize) -> Vec<Class> {
    let mut out = vec![Class::Never; len];
    for k in (0..len).rev() {
        out[k] = match code % 3 {
            0 => Class::Never,
            1 => Class::Always,
            _ => Class::Conditional,
        };
        code /= 3;
    }
    out
}

/// RNG for one replicate: the seed picks the generator, the replicate index
/// the stream.
pub fn replicate_rng(seed: u64, replicate: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate);
    rng
}

/// Estimates assignment frequencies per (type, classification, school).
pub fn mc_score(template: &MarketTemplate, config: &OracleConfig) -> Result<OracleResult> {
    template.validate()?;
    if config.draws == 0 {
        return Err(Error::Config("draws must be at least 1".into()));
    }
    let valid = |d: f64| (0.0..=1.0).contains(&d);
    if !valid(config.delta) || !config.per_school.values().all(|&d| valid(d)) {
        return Err(Error::Config("bandwidth must lie in [0, 1]".into()));
    }
    let base = MarketIndex::new(&template.market)?;
    if base.ranked_max_len() > 40 {
        return Err(Error::Config("ranked lists longer than 40 schools".into()));
    }
    let deltas: Vec<f64> = base
        .school_ids
        .iter()
        .map(|s| config.per_school.get(s).copied().unwrap_or(config.delta))
        .collect();

    // distribution of every tie-breaker slot
    let mut dists: Vec<&TieBreakerDist> = Vec::new();
    let mut slot_dist = vec![0usize; base.values.len()];
    for i in 0..base.applicant_count() {
        for slot in base.slots(i) {
            let d = template.cdfs.dist(template.groups[i], base.slot_tie_breaker(slot));
            let k = match dists.iter().position(|x| std::ptr::eq(*x, d)) {
                Some(k) => k,
                None => {
                    dists.push(d);
                    dists.len() - 1
                }
            };
            slot_dist[slot] = k;
        }
    }

    let n = base.applicant_count();
    let blocks: Vec<u32> = (0..config.draws.div_ceil(BLOCK)).collect();
    let run_block = |b: &u32| -> Acc {
        let mut index = base.clone();
        let mut acc = Acc::new(n);
        let mut scratch = ScoreScratch::new();
        let mut classes = Vec::new();
        let mut psi = Vec::new();
        let start = b * BLOCK;
        for rep in start..(start + BLOCK).min(config.draws) {
            let mut rng = replicate_rng(config.seed, rep as u64);
            for (v, &d) in index.values.iter_mut().zip(&slot_dist) {
                *v = dists[d].sample(&mut rng);
            }
            let assignment = deferred_acceptance(&index);
            let ctx = ScoreContext::new(&index, &assignment.cutoffs, &deltas);
            for i in 0..n {
                let entries = index.ranked(i);
                if entries.is_empty() {
                    continue;
                }
                ctx.classify_applicant(i, &mut classes);
                if config.plug_in {
                    ctx.scores(entries, &classes, &mut scratch, &mut psi);
                }
                let code = if config.condition_on_class { encode(&classes) } else { 0 };
                let cell = acc.cell(i, code, entries.len());
                cell.occupancy += 1;
                let r = assignment.rank[i];
                if r != UNASSIGNED {
                    cell.hits[r as usize] += 1;
                }
                if config.plug_in {
                    for (s, p) in cell.plug_in.iter_mut().zip(&psi) {
                        *s += p;
                    }
                }
            }
        }
        acc
    };

    let mut total = Acc::new(n);
    for batch in blocks.chunks(BATCH) {
        let parts: Vec<Acc> = batch.par_iter().map(run_block).collect();
        for part in parts {
            total.merge(part);
        }
    }

    // pool applicants of the same type
    let groups = group_types(&template.market);
    let types: Vec<ApplicantType> = groups.keys().cloned().collect();
    let mut pooled: BTreeMap<(usize, u64), OracleCell> = BTreeMap::new();
    for (k, ids) in groups.values().enumerate() {
        let len = types[k].preferences.len();
        if len == 0 {
            continue;
        }
        for id in ids {
            let i = base.applicant_index(*id).expect("indexed applicant");
            for c in &total.applicants[i] {
                let cell = pooled.entry((k, c.code)).or_insert_with(|| OracleCell {
                    kind: k,
                    classes: if config.condition_on_class { decode(c.code, len) } else { Vec::new() },
                    occupancy: 0,
                    hits: vec![0; len],
                    plug_in_sum: vec![0.0; len],
                });
                cell.occupancy += c.occupancy;
                for (d, s) in cell.hits.iter_mut().zip(&c.hits) {
                    *d += s;
                }
                for (d, s) in cell.plug_in_sum.iter_mut().zip(&c.plug_in) {
                    *d += s;
                }
            }
        }
    }
    let mut cells: Vec<OracleCell> = pooled.into_values().collect();
    cells.sort_by(|a, b| a.kind.cmp(&b.kind).then_with(|| a.classes.cmp(&b.classes)));
    Ok(OracleResult { draws: config.draws, types, cells })
}
