//! Applicants, schools, priorities and tie-breakers.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{cmp_scalar, Scalar};

macro_rules! id_type {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(
            Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
        )]
        #[serde(transparent)]
        pub struct $name(pub u32);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}", self.0)
            }
        }
    };
}

id_type!(SchoolId);
id_type!(ApplicantId);
id_type!(
    /// Tie-breaker index. Ids `1..=U` are lottery numbers, larger ids are
    /// non-lottery (screened) tie-breakers.
    TieBreakerId
);

/// Seat supply of a school.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Capacity {
    Seats(u32),
    /// Share of the market; becomes `floor(N * q)` seats.
    Fraction(f64),
}

impl Capacity {
    pub fn seats(&self, applicants: usize) -> u32 {
        match *self {
            Capacity::Seats(n) => n,
            Capacity::Fraction(q) => (applicants as f64 * q).floor().max(0.0) as u32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct School {
    pub id: SchoolId,
    pub capacity: Capacity,
    pub tie_breaker: TieBreakerId,
    pub tags: BTreeSet<String>,
}

impl School {
    pub fn new(id: u32, capacity: Capacity, tie_breaker: u32) -> Self {
        School {
            id: SchoolId(id),
            capacity,
            tie_breaker: TieBreakerId(tie_breaker),
            tags: BTreeSet::new(),
        }
    }

    pub fn with_tag(mut self, tag: &str) -> Self {
        self.tags.insert(tag.to_string());
        self
    }
}

/// Priority class at a school. Smaller levels are served first;
/// `Ineligible` sorts after every level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Priority {
    Level(u32),
    Ineligible,
}

impl Priority {
    pub fn level(self) -> Option<u32> {
        match self {
            Priority::Level(p) => Some(p),
            Priority::Ineligible => None,
        }
    }
}

impl fmt::Display for Priority {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Priority::Level(p) => write!(f, "{p}"),
            Priority::Ineligible => f.write_str("inf"),
        }
    }
}

/// Preferences and priorities: everything the mechanism knows about an
/// applicant apart from tie-breakers.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct ApplicantType {
    /// Most preferred first.
    pub preferences: Vec<SchoolId>,
    pub priorities: BTreeMap<SchoolId, Priority>,
}

impl ApplicantType {
    pub fn priority_at(&self, school: SchoolId) -> Option<Priority> {
        self.priorities.get(&school).copied()
    }

    pub fn rank_of(&self, school: SchoolId) -> Option<usize> {
        self.preferences.iter().position(|&s| s == school)
    }

    pub fn ranks(&self, school: SchoolId) -> bool {
        self.preferences.contains(&school)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Applicant<T> {
    pub id: ApplicantId,
    pub kind: ApplicantType,
    pub tie_breakers: BTreeMap<TieBreakerId, T>,
    pub covariates: BTreeMap<String, f64>,
    pub outcomes: BTreeMap<String, f64>,
    pub enrollment: BTreeMap<String, f64>,
}

impl<T> Applicant<T> {
    pub fn new(id: u32, kind: ApplicantType) -> Self {
        Applicant {
            id: ApplicantId(id),
            kind,
            tie_breakers: BTreeMap::new(),
            covariates: BTreeMap::new(),
            outcomes: BTreeMap::new(),
            enrollment: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Market<T> {
    pub schools: Vec<School>,
    pub applicants: Vec<Applicant<T>>,
    /// Number of lottery tie-breakers, `U`.
    pub lottery_count: u32,
    /// Lowest finite priority, `K`.
    pub max_priority: u32,
}

impl<T: Scalar> Market<T> {
    pub fn new(lottery_count: u32, max_priority: u32) -> Self {
        Market {
            schools: Vec::new(),
            applicants: Vec::new(),
            lottery_count,
            max_priority,
        }
    }

    pub fn school(&self, id: SchoolId) -> Option<&School> {
        self.schools.iter().find(|s| s.id == id)
    }

    pub fn applicant(&self, id: ApplicantId) -> Option<&Applicant<T>> {
        self.applicants.iter().find(|a| a.id == id)
    }

    pub fn is_lottery(&self, v: TieBreakerId) -> bool {
        v.0 >= 1 && v.0 <= self.lottery_count
    }

    /// Largest tie-breaker id used by any school, `V`.
    pub fn tie_breaker_count(&self) -> u32 {
        self.schools.iter().map(|s| s.tie_breaker.0).max().unwrap_or(0)
    }

    pub fn seats(&self, school: &School) -> u32 {
        school.capacity.seats(self.applicants.len())
    }

    pub fn validate(&self) -> ValidationReport {
        validate_market(self)
    }
}

/// A hard problem that makes the market unusable.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    DuplicateSchool(SchoolId),
    DuplicateApplicant(ApplicantId),
    InvalidTieBreakerId { school: SchoolId, tie_breaker: TieBreakerId },
    LotteryCount { lottery_count: u32, tie_breakers: u32 },
    MaxPriority(u32),
    CapacityOutOfRange { school: SchoolId, fraction: f64 },
    DanglingSchool { applicant: ApplicantId, school: SchoolId },
    DuplicateRank { applicant: ApplicantId, school: SchoolId },
    MissingPriority { applicant: ApplicantId, school: SchoolId },
    PriorityOutOfRange { applicant: ApplicantId, school: SchoolId, priority: u32 },
    MissingTieBreaker { applicant: ApplicantId, tie_breaker: TieBreakerId },
    TieBreakerOutOfRange { applicant: ApplicantId, tie_breaker: TieBreakerId, value: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Violation::*;
        match self {
            DuplicateSchool(s) => write!(f, "duplicate school id {s}"),
            DuplicateApplicant(a) => write!(f, "duplicate applicant id {a}"),
            InvalidTieBreakerId { school, tie_breaker } => {
                write!(f, "school {school} uses invalid tie-breaker id {tie_breaker}")
            }
            LotteryCount { lottery_count, tie_breakers } => write!(
                f,
                "lottery tie-breaker count {lottery_count} outside 1..={tie_breakers}"
            ),
            MaxPriority(k) => write!(f, "max priority {k} must be at least 1"),
            CapacityOutOfRange { school, fraction } => {
                write!(f, "school {school} capacity fraction {fraction} outside [0,1]")
            }
            DanglingSchool { applicant, school } => {
                write!(f, "applicant {applicant} references dangling school id {school}")
            }
            DuplicateRank { applicant, school } => {
                write!(f, "applicant {applicant} ranks school {school} more than once")
            }
            MissingPriority { applicant, school } => {
                write!(f, "applicant {applicant} has no priority at ranked school {school}")
            }
            PriorityOutOfRange { applicant, school, priority } => write!(
                f,
                "applicant {applicant} has priority {priority} at school {school} outside 1..=K"
            ),
            MissingTieBreaker { applicant, tie_breaker } => {
                write!(f, "applicant {applicant} is missing tie-breaker {tie_breaker}")
            }
            TieBreakerOutOfRange { applicant, tie_breaker, value } => write!(
                f,
                "applicant {applicant} tie-breaker {tie_breaker} value {value} out of range (0,1]"
            ),
        }
    }
}

/// Something suspicious that does not block matching.
#[derive(Debug, Clone, PartialEq)]
pub enum Warning {
    /// Two applicants share priority and tie-breaker value at a school. The
    /// engine breaks the tie by ascending applicant id.
    ExactTie { school: SchoolId, first: ApplicantId, second: ApplicantId },
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Warning::ExactTie { school, first, second } => write!(
                f,
                "applicants {first} and {second} tie exactly at school {school}; broken by id"
            ),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    pub warnings: Vec<Warning>,
}

impl ValidationReport {
    /// A market is accepted iff there are no violations.
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn into_result(self) -> Result<Vec<Warning>> {
        if self.is_clean() {
            Ok(self.warnings)
        } else {
            Err(Error::InvalidMarket(
                self.violations.iter().map(|v| v.to_string()).collect(),
            ))
        }
    }
}

pub fn validate_market<T: Scalar>(market: &Market<T>) -> ValidationReport {
    let mut report = ValidationReport::default();
    let v = &mut report.violations;

    let mut schools: HashMap<SchoolId, &School> = HashMap::new();
    for school in &market.schools {
        if schools.insert(school.id, school).is_some() {
            v.push(Violation::DuplicateSchool(school.id));
        }
        if school.tie_breaker.0 == 0 {
            v.push(Violation::InvalidTieBreakerId {
                school: school.id,
                tie_breaker: school.tie_breaker,
            });
        }
        if let Capacity::Fraction(q) = school.capacity {
            if !(0.0..=1.0).contains(&q) {
                v.push(Violation::CapacityOutOfRange { school: school.id, fraction: q });
            }
        }
    }
    let tie_breakers = market.tie_breaker_count();
    if !market.schools.is_empty()
        && (market.lottery_count == 0 || market.lottery_count > tie_breakers)
    {
        v.push(Violation::LotteryCount {
            lottery_count: market.lottery_count,
            tie_breakers,
        });
    }
    if market.max_priority == 0 {
        v.push(Violation::MaxPriority(market.max_priority));
    }

    let zero = T::zero();
    let one = T::one();
    let mut seen_applicants = HashSet::new();
    for app in &market.applicants {
        if !seen_applicants.insert(app.id) {
            v.push(Violation::DuplicateApplicant(app.id));
        }
        let mut ranked = HashSet::new();
        let mut needed_tbs = BTreeSet::new();
        for &s in &app.kind.preferences {
            if !ranked.insert(s) {
                v.push(Violation::DuplicateRank { applicant: app.id, school: s });
                continue;
            }
            match schools.get(&s) {
                None => v.push(Violation::DanglingSchool { applicant: app.id, school: s }),
                Some(school) => {
                    needed_tbs.insert(school.tie_breaker);
                }
            }
            if !app.kind.priorities.contains_key(&s) {
                v.push(Violation::MissingPriority { applicant: app.id, school: s });
            }
        }
        for (&s, &p) in &app.kind.priorities {
            if !schools.contains_key(&s) && !ranked.contains(&s) {
                v.push(Violation::DanglingSchool { applicant: app.id, school: s });
            }
            if let Priority::Level(level) = p {
                if level == 0 || level > market.max_priority {
                    v.push(Violation::PriorityOutOfRange {
                        applicant: app.id,
                        school: s,
                        priority: level,
                    });
                }
            }
        }
        for tb in needed_tbs {
            if !app.tie_breakers.contains_key(&tb) {
                v.push(Violation::MissingTieBreaker { applicant: app.id, tie_breaker: tb });
            }
        }
        for (&tb, &value) in &app.tie_breakers {
            if !(value.is_comparable() && value > zero && value <= one) {
                v.push(Violation::TieBreakerOutOfRange {
                    applicant: app.id,
                    tie_breaker: tb,
                    value: value.to_f64_lossy(),
                });
            }
        }
    }

    if report.violations.is_empty() {
        report.warnings = exact_ties(market);
    }
    report
}

fn exact_ties<T: Scalar>(market: &Market<T>) -> Vec<Warning> {
    let position: HashMap<SchoolId, usize> = market.schools.iter().enumerate().map(|(k, s)| (s.id, k)).collect();
    let mut keys: Vec<Vec<(u32, T, ApplicantId)>> = vec![Vec::new(); market.schools.len()];
    for a in &market.applicants {
        for s in &a.kind.preferences {
            let k = position[s];
            let p = a.kind.priority_at(*s).and_then(|p| p.level());
            if let (Some(p), Some(r)) = (p, a.tie_breakers.get(&market.schools[k].tie_breaker)) {
                keys[k].push((p, *r, a.id));
            }
        }
    }
    let mut warnings = Vec::new();
    for (school, mut keys) in market.schools.iter().zip(keys) {
        keys.sort_by(|a, b| a.0.cmp(&b.0).then(cmp_scalar(&a.1, &b.1)).then(a.2.cmp(&b.2)));
        for pair in keys.windows(2) {
            if pair[0].0 == pair[1].0 && pair[0].1 == pair[1].1 {
                warnings.push(Warning::ExactTie {
                    school: school.id,
                    first: pair[0].2,
                    second: pair[1].2,
                });
            }
        }
    }
    warnings
}

/// Maps raw integer ranks into `(0, 1]` with
/// `(r - min + 1) / (max - min + 1)`, so the largest raw value becomes 1.
pub fn scale_raw_tiebreaker<T: Scalar>(raw: &[i64]) -> Result<Vec<T>> {
    let min = *raw.iter().min().ok_or(Error::EmptyInput("raw tie-breaker list"))?;
    let max = *raw.iter().max().expect("non-empty");
    let denom = T::from_i64(max - min + 1).ok_or(Error::Overflow)?;
    raw.iter()
        .map(|&r| {
            let num = T::from_i64(r - min + 1).ok_or(Error::Overflow)?;
            Ok(num / denom)
        })
        .collect()
}

/// Priority plus tie-breaker, or `Infinite` for an ineligible applicant.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub enum Position<T> {
    Finite(T),
    Infinite,
}

pub fn position<T: Scalar>(applicant: &Applicant<T>, school: &School) -> Result<Position<T>> {
    let priority = applicant
        .kind
        .priority_at(school.id)
        .unwrap_or(Priority::Ineligible);
    let level = match priority {
        Priority::Level(p) => p,
        Priority::Ineligible => return Ok(Position::Infinite),
    };
    let r = applicant
        .tie_breakers
        .get(&school.tie_breaker)
        .ok_or(Error::MissingTieBreaker {
            applicant: applicant.id,
            tie_breaker: school.tie_breaker,
        })?;
    Ok(Position::Finite(T::from_priority(level) + *r))
}

/// Partitions applicants by exact (preferences, priorities) equality.
pub fn group_types<T: Scalar>(market: &Market<T>) -> BTreeMap<ApplicantType, Vec<ApplicantId>> {
    let mut groups: BTreeMap<ApplicantType, Vec<ApplicantId>> = BTreeMap::new();
    for app in &market.applicants {
        groups.entry(app.kind.clone()).or_default().push(app.id);
    }
    for ids in groups.values_mut() {
        ids.sort();
    }
    groups
}
