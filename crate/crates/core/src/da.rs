//! Student-proposing deferred acceptance, serial dictatorship, and the
//! cutoff statistics both produce.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};
use std::fmt;

use crate::error::{Error, Result};
use crate::index::{MarketIndex, INELIGIBLE};
use crate::market::{ApplicantId, Market, SchoolId};
use crate::scalar::{cmp_scalar, Scalar};

/// Sentinel for "no assignment" in [`Assignment::rank`].
pub const UNASSIGNED: u32 = u32::MAX;

/// The worst admitted applicant at a full school.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Admitted<T> {
    pub applicant: ApplicantId,
    pub priority: u32,
    pub value: T,
}

impl<T: Scalar> Admitted<T> {
    fn key(&self) -> (u32, T, ApplicantId) {
        (self.priority, self.value, self.applicant)
    }
}

/// DA cutoff `xi = rho + tau` of a school.
///
/// A school with spare seats is flagged `slack`; it then carries
/// `xi = K + 1`, `marginal_priority = K + 1` and `tau = 0`. Downstream logic
/// branches on the flag. A zero-seat school admits nobody and carries
/// `xi = 0` with marginal priority 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cutoff<T> {
    pub xi: T,
    pub marginal_priority: u32,
    pub tau: T,
    pub slack: bool,
    pub seats: u32,
    pub assigned: u32,
    pub last_admitted: Option<Admitted<T>>,
}

impl<T: Scalar> Cutoff<T> {
    fn from_fill(seats: u32, assigned: u32, last: Option<Admitted<T>>, max_priority: u32) -> Self {
        if assigned < seats {
            let k1 = max_priority + 1;
            return Cutoff {
                xi: T::from_priority(k1),
                marginal_priority: k1,
                tau: T::zero(),
                slack: true,
                seats,
                assigned,
                last_admitted: last,
            };
        }
        match last {
            None => Cutoff {
                xi: T::zero(),
                marginal_priority: 0,
                tau: T::zero(),
                slack: false,
                seats,
                assigned,
                last_admitted: None,
            },
            Some(adm) => {
                // rho = int(xi): a last admit with R = 1 sits exactly on the next integer.
                let (marginal_priority, tau) = if adm.value == T::one() {
                    (adm.priority + 1, T::zero())
                } else {
                    (adm.priority, adm.value)
                };
                Cutoff {
                    xi: T::from_priority(adm.priority) + adm.value,
                    marginal_priority,
                    tau,
                    slack: false,
                    seats,
                    assigned,
                    last_admitted: Some(adm),
                }
            }
        }
    }

    /// Tie-breaker cutoff in the serial-dictatorship convention: the value
    /// of the last admit, 1 for a school with spare seats.
    pub fn sd_tau(&self) -> T {
        if self.slack {
            T::one()
        } else {
            self.last_admitted.map_or(self.tau, |a| a.value)
        }
    }

    /// Whether an applicant with this priority and tie-breaker value clears
    /// the cutoff. Exact ties with the last admit go to the smaller id.
    pub fn admits(&self, priority: u32, value: T, applicant: ApplicantId) -> bool {
        if priority == INELIGIBLE {
            return false;
        }
        if self.slack {
            return true;
        }
        match &self.last_admitted {
            None => false,
            Some(last) => cmp_key(&(priority, value, applicant), &last.key()) != Ordering::Greater,
        }
    }
}

fn cmp_key<T: Scalar>(a: &(u32, T, ApplicantId), b: &(u32, T, ApplicantId)) -> Ordering {
    a.0.cmp(&b.0).then(cmp_scalar(&a.1, &b.1)).then(a.2.cmp(&b.2))
}

/// Index-level match result: for each applicant, the position in their
/// ranked list of the assigned school, or [`UNASSIGNED`].
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment<T> {
    pub rank: Vec<u32>,
    pub cutoffs: Vec<Cutoff<T>>,
}

impl<T: Scalar> Assignment<T> {
    pub fn school_of(&self, index: &MarketIndex<T>, i: usize) -> Option<usize> {
        let r = self.rank[i];
        (r != UNASSIGNED).then(|| index.ranked(i)[r as usize].school as usize)
    }

    pub fn into_outcome(self, index: &MarketIndex<T>) -> MatchOutcome<T> {
        let assignment = (0..index.applicant_count())
            .map(|i| self.school_of(index, i).map(|s| index.school_ids[s]))
            .collect();
        let cutoffs = index.school_ids.iter().copied().zip(self.cutoffs).collect();
        MatchOutcome { applicants: index.applicant_ids.clone(), assignment, cutoffs }
    }
}

/// Assignment of every applicant plus per-school cutoffs.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchOutcome<T> {
    /// Applicant ids in market order.
    pub applicants: Vec<ApplicantId>,
    /// `None` is the outside option.
    pub assignment: Vec<Option<SchoolId>>,
    pub cutoffs: BTreeMap<SchoolId, Cutoff<T>>,
}

impl<T: Scalar> MatchOutcome<T> {
    pub fn assigned(&self, applicant: ApplicantId) -> Option<SchoolId> {
        self.applicants
            .iter()
            .position(|&a| a == applicant)
            .and_then(|i| self.assignment[i])
    }

    pub fn cutoff(&self, school: SchoolId) -> Option<&Cutoff<T>> {
        self.cutoffs.get(&school)
    }

    pub fn assignment_map(&self) -> BTreeMap<ApplicantId, Option<SchoolId>> {
        self.applicants.iter().copied().zip(self.assignment.iter().copied()).collect()
    }

    /// Checks that the outcome was produced for `index`'s market.
    pub fn check_against(&self, index: &MarketIndex<T>) -> Result<()> {
        if self.applicants != index.applicant_ids {
            return Err(Error::OutcomeMismatch("applicant list differs".into()));
        }
        if self.cutoffs.len() != index.school_count()
            || index.school_ids.iter().any(|s| !self.cutoffs.contains_key(s))
        {
            return Err(Error::OutcomeMismatch("school set differs".into()));
        }
        Ok(())
    }

    /// Cutoffs in index order.
    pub fn cutoff_vec(&self, index: &MarketIndex<T>) -> Vec<Cutoff<T>> {
        index.school_ids.iter().map(|s| self.cutoffs[s]).collect()
    }
}

#[derive(Debug, Clone, Copy)]
struct Held<T> {
    priority: u32,
    value: T,
    applicant: ApplicantId,
    index: u32,
}

impl<T: Scalar> PartialEq for Held<T> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl<T: Scalar> Eq for Held<T> {}
impl<T: Scalar> PartialOrd for Held<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<T: Scalar> Ord for Held<T> {
    /// Larger means worse position, so a max-heap keeps the worst admit on top.
    fn cmp(&self, other: &Self) -> Ordering {
        cmp_key(
            &(self.priority, self.value, self.applicant),
            &(other.priority, other.value, other.applicant),
        )
    }
}

/// Runs student-proposing DA on a validated market index.
pub fn deferred_acceptance<T: Scalar>(index: &MarketIndex<T>) -> Assignment<T> {
    let n = index.applicant_count();
    let mut pools: Vec<BinaryHeap<Held<T>>> = index
        .seats
        .iter()
        .map(|&q| BinaryHeap::with_capacity(q.min(n as u32) as usize))
        .collect();
    let mut next = vec![0u32; n];
    let mut rank = vec![UNASSIGNED; n];
    let mut free: Vec<u32> = (0..n as u32).rev().collect();

    while let Some(a) = free.pop() {
        let ai = a as usize;
        let list = index.ranked(ai);
        while (next[ai] as usize) < list.len() {
            let k = next[ai];
            next[ai] += 1;
            let entry = &list[k as usize];
            if entry.priority == INELIGIBLE {
                continue;
            }
            let s = entry.school as usize;
            let seats = index.seats[s] as usize;
            if seats == 0 {
                continue;
            }
            let cand = Held {
                priority: entry.priority,
                value: index.value(entry),
                applicant: index.applicant_ids[ai],
                index: a,
            };
            let pool = &mut pools[s];
            if pool.len() < seats {
                pool.push(cand);
                rank[ai] = k;
                break;
            }
            let worst = *pool.peek().expect("full pool");
            if cand < worst {
                pool.pop();
                pool.push(cand);
                rank[ai] = k;
                rank[worst.index as usize] = UNASSIGNED;
                free.push(worst.index);
                break;
            }
        }
    }

    let cutoffs = pools
        .iter()
        .zip(&index.seats)
        .map(|(pool, &seats)| {
            let last = pool.peek().map(|h| Admitted {
                applicant: h.applicant,
                priority: h.priority,
                value: h.value,
            });
            Cutoff::from_fill(seats, pool.len() as u32, last, index.max_priority)
        })
        .collect();
    Assignment { rank, cutoffs }
}

pub fn run_da<T: Scalar>(market: &Market<T>) -> Result<MatchOutcome<T>> {
    let index = MarketIndex::new(market)?;
    Ok(deferred_acceptance(&index).into_outcome(&index))
}

/// Serial dictatorship: order applicants by the single tie-breaker and let
/// each take the best remaining seat. Requires one tie-breaker shared by
/// every school and a common finite priority for every ranked school.
pub fn run_serial_dictatorship<T: Scalar>(market: &Market<T>) -> Result<MatchOutcome<T>> {
    let index = MarketIndex::new(market)?;
    let tb = match index.school_tb.first() {
        Some(&tb) => tb,
        None => return Ok(deferred_acceptance(&index).into_outcome(&index)),
    };
    if index.school_tb.iter().any(|&v| v != tb) {
        return Err(Error::NotSerialDictatorship("a single tie-breaker for every school"));
    }
    let mut common = None;
    for i in 0..index.applicant_count() {
        for e in index.ranked(i) {
            if e.priority == INELIGIBLE || common.is_some_and(|c| c != e.priority) {
                return Err(Error::NotSerialDictatorship("equal priorities at every school"));
            }
            common = Some(e.priority);
        }
    }

    let mut order: Vec<usize> = (0..index.applicant_count())
        .filter(|&i| !index.ranked(i).is_empty())
        .collect();
    let draw = |i: usize| index.values[index.slots(i).start];
    order.sort_by(|&a, &b| {
        cmp_scalar(&draw(a), &draw(b)).then(index.applicant_ids[a].cmp(&index.applicant_ids[b]))
    });

    let mut remaining = index.seats.clone();
    let mut rank = vec![UNASSIGNED; index.applicant_count()];
    let mut last: Vec<Option<Admitted<T>>> = vec![None; index.school_count()];
    for i in order {
        for (k, e) in index.ranked(i).iter().enumerate() {
            let s = e.school as usize;
            if remaining[s] > 0 {
                remaining[s] -= 1;
                rank[i] = k as u32;
                // applicants arrive in tie-breaker order, so the latest is the worst
                last[s] = Some(Admitted {
                    applicant: index.applicant_ids[i],
                    priority: e.priority,
                    value: index.value(e),
                });
                break;
            }
        }
    }
    let cutoffs = (0..index.school_count())
        .map(|s| {
            let seats = index.seats[s];
            Cutoff::from_fill(seats, seats - remaining[s], last[s], index.max_priority)
        })
        .collect();
    Ok(Assignment { rank, cutoffs }.into_outcome(&index))
}

#[derive(Debug, Clone, PartialEq)]
pub enum StabilityViolation {
    /// Assigned to a school the applicant does not rank or does not clear.
    NotQualified { applicant: ApplicantId, school: SchoolId },
    /// Clears the cutoff at a school preferred to the assignment (or at some
    /// ranked school while unassigned).
    JustifiedEnvy {
        applicant: ApplicantId,
        assigned: Option<SchoolId>,
        preferred: SchoolId,
    },
    OverCapacity { school: SchoolId, assigned: u32, seats: u32 },
}

impl StabilityViolation {
    pub fn applicant(&self) -> Option<ApplicantId> {
        match self {
            StabilityViolation::NotQualified { applicant, .. }
            | StabilityViolation::JustifiedEnvy { applicant, .. } => Some(*applicant),
            StabilityViolation::OverCapacity { .. } => None,
        }
    }
}

impl fmt::Display for StabilityViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StabilityViolation::NotQualified { applicant, school } => {
                write!(f, "applicant {applicant} assigned to {school} without clearing its cutoff")
            }
            StabilityViolation::JustifiedEnvy { applicant, assigned, preferred } => {
                let assigned = assigned.map_or("nothing".to_string(), |s| s.to_string());
                write!(f, "applicant {applicant} assigned {assigned} but qualifies at preferred {preferred}")
            }
            StabilityViolation::OverCapacity { school, assigned, seats } => {
                write!(f, "school {school} holds {assigned} applicants for {seats} seats")
            }
        }
    }
}

/// Checks an outcome against the cutoff characterization: an applicant is
/// assigned `s` iff they clear `s` and fail every preferred school. Reports
/// at most one violation per applicant, plus capacity overruns.
pub fn verify_stability<T: Scalar>(
    market: &Market<T>,
    outcome: &MatchOutcome<T>,
) -> Result<Vec<StabilityViolation>> {
    let index = MarketIndex::new(market)?;
    outcome.check_against(&index)?;
    let cutoffs = outcome.cutoff_vec(&index);
    let mut violations = Vec::new();
    let mut counts = vec![0u32; index.school_count()];

    for i in 0..index.applicant_count() {
        let id = index.applicant_ids[i];
        let assigned = outcome.assignment[i];
        let list = index.ranked(i);
        let clears = |e: &crate::index::Entry| {
            cutoffs[e.school as usize].admits(e.priority, index.value(e), id)
        };
        let expected = list.iter().find(|e| clears(e)).map(|e| index.school_ids[e.school as usize]);
        if let Some(s) = assigned {
            match index.school_index(s) {
                Some(si) => counts[si] += 1,
                None => {
                    violations.push(StabilityViolation::NotQualified { applicant: id, school: s });
                    continue;
                }
            }
            let own = list.iter().find(|e| index.school_ids[e.school as usize] == s);
            if !own.is_some_and(|e| clears(e)) {
                violations.push(StabilityViolation::NotQualified { applicant: id, school: s });
                continue;
            }
        }
        if expected != assigned {
            let preferred = expected.expect("a qualifying school precedes the assignment");
            violations.push(StabilityViolation::JustifiedEnvy { applicant: id, assigned, preferred });
        }
    }
    for (s, &c) in counts.iter().enumerate() {
        if c > index.seats[s] {
            violations.push(StabilityViolation::OverCapacity {
                school: index.school_ids[s],
                assigned: c,
                seats: index.seats[s],
            });
        }
    }
    Ok(violations)
}
