//! Closed-form local DA propensity scores.
//!
//! For an applicant of a given type, each ranked school is classified as
//! never (`n`), always (`a`) or conditionally (`c`) seated relative to the
//! realized cutoffs. Walking the preference list in order, the engine tracks
//! per tie-breaker the most informative disqualification (MID) produced by
//! the schools already passed, counts the screened schools that set a MID
//! while the applicant sits inside their bandwidth window (`m`), and
//! combines these into
//!
//! ```text
//! psi_s = 0                                   if t_s = n or some preferred t_b = a
//!       = sigma * lambda                      if t_s = a
//!       = sigma * lambda * (tau_s - MID)/(1 - MID), clamped at 0,  if t_s = c, lottery
//!       = sigma * lambda * 0.5                if t_s = c, screened
//! ```
//!
//! with `sigma = 0.5^m` and `lambda` the product of `1 - MID^v` over lottery
//! tie-breakers.

use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::da::{Cutoff, MatchOutcome};
use crate::error::{Error, Result};
use crate::index::{Entry, MarketIndex, INELIGIBLE};
use crate::market::{ApplicantId, ApplicantType, Market, Priority, SchoolId, TieBreakerId};
use crate::scalar::Scalar;

/// Minimum number of marginal-priority applicants required on each side of a
/// screened cutoff for its bandwidth to stay positive.
pub const MIN_SIDE_OBSERVATIONS: usize = 5;

/// Scores within this distance of 0 or 1 count as degenerate.
pub const RISK_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Class {
    Never,
    Always,
    Conditional,
}

impl Class {
    pub fn code(self) -> char {
        match self {
            Class::Never => 'n',
            Class::Always => 'a',
            Class::Conditional => 'c',
        }
    }

    pub fn from_code(c: char) -> Option<Self> {
        match c {
            'n' => Some(Class::Never),
            'a' => Some(Class::Always),
            'c' => Some(Class::Conditional),
            _ => None,
        }
    }
}

impl fmt::Display for Class {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.code())
    }
}

/// Classifies one applicant at one school.
///
/// The bandwidth window `(tau - delta, tau + delta]` only applies at
/// screened schools; at lottery schools every marginal-priority applicant is
/// conditionally seated.
pub fn classify<T: Scalar>(
    priority: u32,
    value: T,
    cutoff: &Cutoff<T>,
    lottery: bool,
    delta: T,
) -> Class {
    if priority == INELIGIBLE || priority > cutoff.marginal_priority {
        return Class::Never;
    }
    if priority < cutoff.marginal_priority {
        return Class::Always;
    }
    if lottery {
        return Class::Conditional;
    }
    if value > cutoff.tau + delta {
        Class::Never
    } else if value <= cutoff.tau - delta {
        Class::Always
    } else {
        Class::Conditional
    }
}

/// `0.5^m`.
pub fn sigma<T: Scalar>(m: u32) -> T {
    T::half_pow(m)
}

/// Product of `1 - MID^v` over lottery tie-breakers, in ascending
/// tie-breaker order. Tie-breakers absent from `mids` have MID 0.
pub fn lambda<T: Scalar>(mids: &[(TieBreakerId, T)], lottery_count: u32) -> T {
    let mut sorted: Vec<_> = mids.iter().filter(|(v, _)| v.0 <= lottery_count).collect();
    sorted.sort_by_key(|(v, _)| *v);
    sorted.iter().fold(T::one(), |acc, (_, mid)| acc * (T::one() - *mid))
}

/// Inputs to the three-branch score formula at one school.
#[derive(Debug, Clone, Copy)]
pub struct LocalScoreInput<T> {
    pub class: Class,
    /// Some preferred school has class `a`.
    pub blocked: bool,
    pub lottery: bool,
    pub tau: T,
    pub sigma: T,
    /// `1 - MID^v` over lottery tie-breakers other than the school's own.
    pub lambda_other: T,
    /// MID for the school's own tie-breaker.
    pub mid_own: T,
}

impl<T: Scalar> LocalScoreInput<T> {
    /// Full lottery disqualification product including the own tie-breaker.
    pub fn lambda(&self) -> T {
        if self.lottery {
            self.lambda_other * (T::one() - self.mid_own)
        } else {
            self.lambda_other
        }
    }
}

/// Evaluates the local score formula.
///
/// The lottery `c` branch multiplies out `(1 - MID) * (tau - MID) / (1 - MID)`
/// to `tau - MID`, which also gives 0 when MID is 1.
pub fn local_score<T: Scalar>(input: &LocalScoreInput<T>) -> T {
    if input.blocked {
        return T::zero();
    }
    match input.class {
        Class::Never => T::zero(),
        Class::Always => input.sigma * input.lambda(),
        Class::Conditional if input.lottery => {
            input.sigma * input.lambda_other * (input.tau - input.mid_own).max_of(T::zero())
        }
        Class::Conditional => input.sigma * input.lambda() * T::half(),
    }
}

/// How a MID value was determined.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MidBranch {
    /// No preferred school uses the tie-breaker.
    Empty,
    /// Preferred schools exist but the applicant is below marginal priority at all.
    Excluded,
    /// Above marginal priority at some preferred school: MID = 1.
    Cleared,
    /// Largest tie-breaker cutoff among marginal-priority preferred schools.
    Marginal,
}

/// MID state for one tie-breaker after a prefix of the preference list.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TieBreakerState<T> {
    pub tie_breaker: TieBreakerId,
    pub lottery: bool,
    cleared: bool,
    /// (tau, list position, school) of the MID-determining school.
    best: Option<(T, usize, SchoolId)>,
    /// Another marginal school had the same tau as `best`.
    pub tied: bool,
}

impl<T: Scalar> TieBreakerState<T> {
    pub fn mid(&self) -> T {
        if self.cleared {
            T::one()
        } else {
            self.best.map(|b| b.0).unwrap_or_else(T::zero)
        }
    }

    pub fn branch(&self) -> MidBranch {
        if self.cleared {
            MidBranch::Cleared
        } else if self.best.is_some() {
            MidBranch::Marginal
        } else {
            MidBranch::Excluded
        }
    }

    /// List position and id of the school that determines the MID.
    pub fn determining(&self) -> Option<(usize, SchoolId)> {
        if self.cleared {
            None
        } else {
            self.best.map(|b| (b.1, b.2))
        }
    }
}

/// MID for one (type, school, tie-breaker).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mid<T> {
    pub value: T,
    pub branch: MidBranch,
    pub determining: Option<SchoolId>,
}

/// Number of screened tie-breakers whose MID-determining school is
/// conditionally seated. Identity of the argmax school is used instead of
/// comparing MID and cutoff values.
pub fn m_count<T: Scalar>(states: &[TieBreakerState<T>], classes: &[Class]) -> u32 {
    states
        .iter()
        .filter(|st| !st.lottery)
        .filter(|st| st.determining().is_some_and(|(pos, _)| classes[pos] == Class::Conditional))
        .count() as u32
}

/// Score components at one school, handed to [`ScoreContext::walk`] visitors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreParts<T> {
    pub psi: T,
    pub m: u32,
    pub sigma: T,
    pub lambda: T,
    pub blocked: bool,
}

/// Reusable buffer for [`ScoreContext::walk`].
#[derive(Debug, Clone, Default)]
pub struct ScoreScratch<T> {
    states: Vec<TieBreakerState<T>>,
}

impl<T> ScoreScratch<T> {
    pub fn new() -> Self {
        ScoreScratch { states: Vec::new() }
    }
}

/// Realized cutoffs and bandwidths against which applicants are scored.
#[derive(Debug, Clone, Copy)]
pub struct ScoreContext<'a, T> {
    pub index: &'a MarketIndex<T>,
    pub cutoffs: &'a [Cutoff<T>],
    /// Per school, in index order; ignored at lottery schools.
    pub deltas: &'a [T],
}

impl<'a, T: Scalar> ScoreContext<'a, T> {
    pub fn new(index: &'a MarketIndex<T>, cutoffs: &'a [Cutoff<T>], deltas: &'a [T]) -> Self {
        assert_eq!(cutoffs.len(), index.school_count());
        assert_eq!(deltas.len(), index.school_count());
        ScoreContext { index, cutoffs, deltas }
    }

    pub fn classify_entry(&self, entry: &Entry, value: T) -> Class {
        let s = entry.school as usize;
        classify(
            entry.priority,
            value,
            &self.cutoffs[s],
            self.index.is_lottery_school(s),
            self.deltas[s],
        )
    }

    /// Classification vector of applicant `i` at its ranked schools.
    pub fn classify_applicant(&self, i: usize, out: &mut Vec<Class>) {
        out.clear();
        out.extend(
            self.index
                .ranked(i)
                .iter()
                .map(|e| self.classify_entry(e, self.index.value(e))),
        );
    }

    /// Walks a ranked list, calling `visit(position, parts, states)` for each
    /// school with the tie-breaker states of the schools preferred to it.
    pub fn walk(
        &self,
        entries: &[Entry],
        classes: &[Class],
        scratch: &mut ScoreScratch<T>,
        mut visit: impl FnMut(usize, &ScoreParts<T>, &[TieBreakerState<T>]),
    ) {
        debug_assert_eq!(entries.len(), classes.len());
        let states = &mut scratch.states;
        states.clear();
        let lottery_count = self.index.lottery_count;
        let mut blocked = false;
        for (pos, (entry, &class)) in entries.iter().zip(classes).enumerate() {
            let s = entry.school as usize;
            let tb = self.index.school_tb[s];
            let lottery = tb.0 <= lottery_count;
            let cutoff = &self.cutoffs[s];

            let m = m_count(states, classes);
            let sigma = T::half_pow(m);
            let mut lambda_other = T::one();
            let mut mid_own = T::zero();
            for st in states.iter().filter(|st| st.lottery) {
                if st.tie_breaker == tb {
                    mid_own = st.mid();
                } else {
                    lambda_other = lambda_other * (T::one() - st.mid());
                }
            }
            if !lottery {
                mid_own = states
                    .iter()
                    .find(|st| st.tie_breaker == tb)
                    .map(|st| st.mid())
                    .unwrap_or_else(T::zero);
            }
            let input = LocalScoreInput {
                class,
                blocked,
                lottery,
                tau: cutoff.tau,
                sigma,
                lambda_other,
                mid_own,
            };
            let parts = ScoreParts {
                psi: local_score(&input),
                m,
                sigma,
                lambda: input.lambda(),
                blocked,
            };
            visit(pos, &parts, states);

            if class == Class::Always {
                blocked = true;
            }
            let at = match states.binary_search_by_key(&tb, |st| st.tie_breaker) {
                Ok(k) => k,
                Err(k) => {
                    states.insert(
                        k,
                        TieBreakerState { tie_breaker: tb, lottery, cleared: false, best: None, tied: false },
                    );
                    k
                }
            };
            let st = &mut states[at];
            if entry.priority == INELIGIBLE || entry.priority > cutoff.marginal_priority {
                continue;
            }
            if entry.priority < cutoff.marginal_priority {
                st.cleared = true;
                continue;
            }
            let school_id = self.index.school_ids[s];
            match st.best {
                None => st.best = Some((cutoff.tau, pos, school_id)),
                Some((best_tau, _, best_id)) => {
                    if cutoff.tau > best_tau {
                        st.best = Some((cutoff.tau, pos, school_id));
                    } else if cutoff.tau == best_tau {
                        if cutoff.tau != T::one() {
                            st.tied = true;
                        }
                        if school_id < best_id {
                            st.best = Some((cutoff.tau, pos, school_id));
                        }
                    }
                }
            }
        }
    }

    /// Scores every ranked school of a list; `psi` only.
    pub fn scores(&self, entries: &[Entry], classes: &[Class], scratch: &mut ScoreScratch<T>, out: &mut Vec<T>) {
        out.clear();
        self.walk(entries, classes, scratch, |_, parts, _| out.push(parts.psi));
    }

    fn entries_for(&self, kind: &ApplicantType) -> Result<Vec<Entry>> {
        kind.preferences
            .iter()
            .map(|&s| {
                let school = self.index.require_school(s)?;
                let priority = match kind.priority_at(s) {
                    Some(Priority::Level(p)) => p,
                    _ => INELIGIBLE,
                };
                Ok(Entry { school: school as u32, priority, slot: 0 })
            })
            .collect()
    }

    /// Whether some tie-breaker draw classifies `kind` as `classes` under
    /// these cutoffs. Scores of unreachable classifications are not
    /// estimates of anything.
    pub fn reachable(&self, kind: &ApplicantType, classes: &[Class]) -> Result<bool> {
        if classes.len() != kind.preferences.len() {
            return Err(Error::OutcomeMismatch(
                "classification vector length differs from preference list".into(),
            ));
        }
        let entries = self.entries_for(kind)?;
        // feasible values per tie-breaker as a half-open interval (lo, hi]
        let mut bounds: BTreeMap<TieBreakerId, (T, T)> = BTreeMap::new();
        for (e, &class) in entries.iter().zip(classes) {
            let s = e.school as usize;
            let cutoff = &self.cutoffs[s];
            let v = self.index.school_tb[s];
            let lottery = v.0 <= self.index.lottery_count;
            let forced = if e.priority == INELIGIBLE || e.priority > cutoff.marginal_priority {
                Some(Class::Never)
            } else if e.priority < cutoff.marginal_priority {
                Some(Class::Always)
            } else if lottery {
                Some(Class::Conditional)
            } else {
                None
            };
            if let Some(f) = forced {
                if f != class {
                    return Ok(false);
                }
                continue;
            }
            let delta = self.deltas[s];
            let (lo, hi) = match class {
                Class::Never => (cutoff.tau + delta, T::one()),
                Class::Always => (T::zero(), cutoff.tau - delta),
                Class::Conditional => (cutoff.tau - delta, cutoff.tau + delta),
            };
            let b = bounds.entry(v).or_insert((T::zero(), T::one()));
            b.0 = b.0.max_of(lo);
            b.1 = b.1.min_of(hi);
        }
        Ok(bounds.values().all(|(lo, hi)| lo < hi))
    }

    /// MID of `kind` at `school` for tie-breaker `v`.
    pub fn compute_mid(&self, kind: &ApplicantType, school: SchoolId, v: TieBreakerId) -> Result<Mid<T>> {
        let pos = kind.rank_of(school).ok_or(Error::UnknownSchool(school))?;
        if !self.index.school_tb.contains(&v) {
            return Err(Error::UnknownTieBreaker(v));
        }
        let entries = self.entries_for(kind)?;
        let classes = vec![Class::Never; entries.len()];
        let mut scratch = ScoreScratch::new();
        let mut mid = Mid { value: T::zero(), branch: MidBranch::Empty, determining: None };
        self.walk(&entries, &classes, &mut scratch, |p, _, states| {
            if p == pos {
                if let Some(st) = states.iter().find(|st| st.tie_breaker == v) {
                    mid = Mid {
                        value: st.mid(),
                        branch: st.branch(),
                        determining: st.determining().map(|d| d.1),
                    };
                }
            }
        });
        Ok(mid)
    }

    /// Scores a type under a given classification vector (aligned with the
    /// type's preference list), with full audit detail.
    pub fn score_type(&self, kind: &ApplicantType, classes: &[Class]) -> Result<Vec<SchoolScore<T>>> {
        if classes.len() != kind.preferences.len() {
            return Err(Error::OutcomeMismatch(
                "classification vector length differs from preference list".into(),
            ));
        }
        let entries = self.entries_for(kind)?;
        let mut scratch = ScoreScratch::new();
        let mut out = Vec::with_capacity(entries.len());
        self.walk(&entries, classes, &mut scratch, |pos, parts, states| {
            out.push(SchoolScore::new(
                self.index.school_ids[entries[pos].school as usize],
                classes[pos],
                parts,
                states,
            ));
        });
        Ok(out)
    }
}

/// Score of one (applicant, school) with audit values.
#[derive(Debug, Clone, PartialEq)]
pub struct SchoolScore<T> {
    pub school: SchoolId,
    pub class: Class,
    pub psi: T,
    pub m: u32,
    pub sigma: T,
    pub lambda: T,
    /// MID per tie-breaker used by preferred schools, ascending.
    pub mids: Vec<(TieBreakerId, T)>,
}

impl<T: Scalar> SchoolScore<T> {
    fn new(school: SchoolId, class: Class, parts: &ScoreParts<T>, states: &[TieBreakerState<T>]) -> Self {
        SchoolScore {
            school,
            class,
            psi: parts.psi,
            m: parts.m,
            sigma: parts.sigma,
            lambda: parts.lambda,
            mids: states.iter().map(|st| (st.tie_breaker, st.mid())).collect(),
        }
    }
}

/// Default bandwidth rule `c * sd * n^(-exponent)` over the tie-breakers of
/// marginal-priority applicants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandwidthRule {
    pub scale: f64,
    pub exponent: f64,
}

impl Default for BandwidthRule {
    fn default() -> Self {
        BandwidthRule { scale: 1.0, exponent: 1.0 / 3.0 }
    }
}

impl BandwidthRule {
    pub fn apply(&self, values: &[f64]) -> f64 {
        let n = values.len();
        if n < 2 {
            return 0.0;
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        (self.scale * var.sqrt() * (n as f64).powf(-self.exponent)).clamp(0.0, 1.0)
    }
}

/// Where screened-school bandwidths come from.
#[derive(Debug, Clone, PartialEq)]
pub enum BandwidthSpec<T> {
    /// Same bandwidth at every screened school.
    Uniform(T),
    /// Explicit per-school values; schools not listed fall back to the rule.
    PerSchool { values: BTreeMap<SchoolId, T>, fallback: BandwidthRule },
    Rule(BandwidthRule),
}

impl<T> Default for BandwidthSpec<T> {
    fn default() -> Self {
        BandwidthSpec::Rule(BandwidthRule::default())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BandwidthSource {
    Lottery,
    User,
    Rule,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandwidthInfo<T> {
    pub source: BandwidthSource,
    pub requested: T,
    /// Bandwidth actually used.
    pub delta: T,
    pub below: usize,
    pub above: usize,
    /// Forced to zero by the minimum-observation guard.
    pub guarded: bool,
}

fn marginal_values<T: Scalar>(index: &MarketIndex<T>, cutoff: &Cutoff<T>, school: usize) -> Vec<T> {
    let mut out = Vec::new();
    for i in 0..index.applicant_count() {
        for e in index.ranked(i) {
            if e.school as usize == school && e.priority == cutoff.marginal_priority {
                out.push(index.value(e));
            }
        }
    }
    out
}

/// Default bandwidth for a screened school, before the observation guard.
/// Zero when no applicant holds marginal priority.
pub fn default_bandwidth<T: Scalar>(
    market: &Market<T>,
    outcome: &MatchOutcome<T>,
    school: SchoolId,
    rule: &BandwidthRule,
) -> Result<T> {
    let index = MarketIndex::new(market)?;
    outcome.check_against(&index)?;
    let s = index.require_school(school)?;
    let cutoff = &outcome.cutoffs[&school];
    let values: Vec<f64> = marginal_values(&index, cutoff, s).iter().map(|v| v.to_f64_lossy()).collect();
    T::from_f64(rule.apply(&values)).ok_or(Error::Overflow)
}

/// Resolves per-school bandwidths (index order) and applies the guard.
pub fn resolve_bandwidths<T: Scalar>(
    index: &MarketIndex<T>,
    cutoffs: &[Cutoff<T>],
    spec: &BandwidthSpec<T>,
) -> Result<Vec<BandwidthInfo<T>>> {
    (0..index.school_count())
        .map(|s| {
            if index.is_lottery_school(s) {
                return Ok(BandwidthInfo {
                    source: BandwidthSource::Lottery,
                    requested: T::zero(),
                    delta: T::zero(),
                    below: 0,
                    above: 0,
                    guarded: false,
                });
            }
            let cutoff = &cutoffs[s];
            let values = marginal_values(index, cutoff, s);
            let rule_value = |rule: &BandwidthRule| {
                let v: Vec<f64> = values.iter().map(|x| x.to_f64_lossy()).collect();
                T::from_f64(rule.apply(&v)).ok_or(Error::Overflow)
            };
            let (source, requested) = match spec {
                BandwidthSpec::Uniform(d) => (BandwidthSource::User, *d),
                BandwidthSpec::PerSchool { values: map, fallback } => match map.get(&index.school_ids[s]) {
                    Some(d) => (BandwidthSource::User, *d),
                    None => (BandwidthSource::Rule, rule_value(fallback)?),
                },
                BandwidthSpec::Rule(rule) => (BandwidthSource::Rule, rule_value(rule)?),
            };
            if !(requested.is_comparable() && requested >= T::zero() && requested <= T::one()) {
                return Err(Error::InvalidBandwidth(format!(
                    "{:?} at school {}",
                    requested, index.school_ids[s]
                )));
            }
            let below = values
                .iter()
                .filter(|&&r| r > cutoff.tau - requested && r <= cutoff.tau)
                .count();
            let above = values
                .iter()
                .filter(|&&r| r > cutoff.tau && r <= cutoff.tau + requested)
                .count();
            let guarded = requested > T::zero()
                && (below < MIN_SIDE_OBSERVATIONS || above < MIN_SIDE_OBSERVATIONS);
            Ok(BandwidthInfo {
                source,
                requested,
                delta: if guarded { T::zero() } else { requested },
                below,
                above,
                guarded,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScoreWarning<T> {
    /// Two schools share a tie-breaker cutoff below 1; MID ties are broken
    /// by the smaller school id.
    DuplicateCutoff { first: SchoolId, second: SchoolId, tau: T },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRow<T> {
    pub applicant: ApplicantId,
    /// Position in the applicant's preference list, 0-based.
    pub rank: usize,
    pub score: SchoolScore<T>,
}

/// Estimated local scores for every (applicant, ranked school).
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable<T> {
    /// Grouped by applicant in market order, ranked schools in preference order.
    pub rows: Vec<ScoreRow<T>>,
    pub bandwidths: BTreeMap<SchoolId, BandwidthInfo<T>>,
    pub warnings: Vec<ScoreWarning<T>>,
}

impl<T: Scalar> ScoreTable<T> {
    pub fn rows_for(&self, applicant: ApplicantId) -> impl Iterator<Item = &ScoreRow<T>> {
        self.rows.iter().filter(move |r| r.applicant == applicant)
    }

    /// Score at a school, 0 when unranked.
    pub fn psi(&self, applicant: ApplicantId, school: SchoolId) -> T {
        self.rows_for(applicant)
            .find(|r| r.score.school == school)
            .map(|r| r.score.psi)
            .unwrap_or_else(T::zero)
    }

    pub fn delta(&self, school: SchoolId) -> T {
        self.bandwidths.get(&school).map(|b| b.delta).unwrap_or_else(T::zero)
    }
}

fn duplicate_cutoffs<T: Scalar>(index: &MarketIndex<T>, cutoffs: &[Cutoff<T>]) -> Vec<ScoreWarning<T>> {
    let mut warnings = Vec::new();
    let live: Vec<usize> = (0..cutoffs.len())
        .filter(|&s| !cutoffs[s].slack && cutoffs[s].tau > T::zero() && cutoffs[s].tau < T::one())
        .collect();
    for (k, &a) in live.iter().enumerate() {
        for &b in &live[k + 1..] {
            if cutoffs[a].tau == cutoffs[b].tau {
                warnings.push(ScoreWarning::DuplicateCutoff {
                    first: index.school_ids[a],
                    second: index.school_ids[b],
                    tau: cutoffs[a].tau,
                });
            }
        }
    }
    warnings
}

/// Plugs one realized match into the score formula for every applicant.
pub fn estimate_local_score<T: Scalar>(
    market: &Market<T>,
    outcome: &MatchOutcome<T>,
    bandwidths: &BandwidthSpec<T>,
) -> Result<ScoreTable<T>> {
    let index = MarketIndex::new(market)?;
    outcome.check_against(&index)?;
    let cutoffs = outcome.cutoff_vec(&index);
    let infos = resolve_bandwidths(&index, &cutoffs, bandwidths)?;
    let deltas: Vec<T> = infos.iter().map(|b| b.delta).collect();
    let ctx = ScoreContext::new(&index, &cutoffs, &deltas);

    let per_applicant: Vec<Vec<ScoreRow<T>>> = (0..index.applicant_count())
        .into_par_iter()
        .map_init(
            || (ScoreScratch::new(), Vec::new()),
            |(scratch, classes), i| {
                ctx.classify_applicant(i, classes);
                let entries = index.ranked(i);
                let mut rows = Vec::with_capacity(entries.len());
                ctx.walk(entries, classes, scratch, |pos, parts, states| {
                    rows.push(ScoreRow {
                        applicant: index.applicant_ids[i],
                        rank: pos,
                        score: SchoolScore::new(
                            index.school_ids[entries[pos].school as usize],
                            classes[pos],
                            parts,
                            states,
                        ),
                    });
                });
                rows
            },
        )
        .collect();

    Ok(ScoreTable {
        rows: per_applicant.into_iter().flatten().collect(),
        bandwidths: index.school_ids.iter().copied().zip(infos).collect(),
        warnings: duplicate_cutoffs(&index, &cutoffs),
    })
}

/// Sector-level score of one applicant: sum of school scores carrying a label.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SectorScore<T> {
    pub applicant: ApplicantId,
    pub psi: T,
    /// Score strictly inside (0, 1).
    pub risk: bool,
}

pub fn has_risk<T: Scalar>(psi: T) -> bool {
    let x = psi.to_f64_lossy();
    x > RISK_TOLERANCE && x < 1.0 - RISK_TOLERANCE
}

pub fn sector_score<T: Scalar>(
    table: &ScoreTable<T>,
    market: &Market<T>,
    label: &str,
) -> Result<Vec<SectorScore<T>>> {
    let labeled: std::collections::HashSet<SchoolId> = market
        .schools
        .iter()
        .filter(|s| s.tags.contains(label))
        .map(|s| s.id)
        .collect();
    if labeled.is_empty() {
        return Err(Error::UnknownLabel(label.to_string()));
    }
    let mut sums: BTreeMap<ApplicantId, T> = BTreeMap::new();
    for row in &table.rows {
        if labeled.contains(&row.score.school) {
            let e = sums.entry(row.applicant).or_insert_with(T::zero);
            *e = *e + row.score.psi;
        }
    }
    Ok(market
        .applicants
        .iter()
        .map(|a| {
            let psi = sums.get(&a.id).copied().unwrap_or_else(T::zero);
            SectorScore { applicant: a.id, psi, risk: has_risk(psi) }
        })
        .collect())
}
