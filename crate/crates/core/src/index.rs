//! Dense, index-based view of a [`Market`] used by the hot loops.
//!
//! Schools and applicants are addressed by position; each applicant's ranked
//! list is stored contiguously together with the priority at each school and
//! a slot into the applicant's tie-breaker values. The Monte Carlo oracle
//! rewrites those values in place between replicates.

use std::collections::HashMap;
use std::ops::Range;

use crate::error::{Error, Result};
use crate::market::{ApplicantId, Market, Priority, SchoolId, TieBreakerId};
use crate::scalar::Scalar;

pub const INELIGIBLE: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Entry {
    pub school: u32,
    /// Priority level, or [`INELIGIBLE`].
    pub priority: u32,
    /// Index into [`MarketIndex::values`].
    pub slot: u32,
}

#[derive(Debug, Clone)]
pub struct MarketIndex<T> {
    pub school_ids: Vec<SchoolId>,
    school_pos: HashMap<SchoolId, usize>,
    pub seats: Vec<u32>,
    pub school_tb: Vec<TieBreakerId>,
    pub school_lottery: Vec<bool>,
    pub applicant_ids: Vec<ApplicantId>,
    applicant_pos: HashMap<ApplicantId, usize>,
    list_offsets: Vec<usize>,
    entries: Vec<Entry>,
    slot_offsets: Vec<usize>,
    slot_tb: Vec<TieBreakerId>,
    /// Tie-breaker values, one per (applicant, tie-breaker used by a ranked school).
    pub values: Vec<T>,
    pub lottery_count: u32,
    pub max_priority: u32,
}

impl<T: Scalar> MarketIndex<T> {
    /// Builds the index; the market must pass validation.
    pub fn new(market: &Market<T>) -> Result<Self> {
        market.validate().into_result()?;
        Ok(Self::build(market))
    }

    fn build(market: &Market<T>) -> Self {
        let n = market.applicants.len();
        let school_ids: Vec<SchoolId> = market.schools.iter().map(|s| s.id).collect();
        let school_pos: HashMap<SchoolId, usize> =
            school_ids.iter().enumerate().map(|(i, &s)| (s, i)).collect();
        let seats = market.schools.iter().map(|s| s.capacity.seats(n)).collect();
        let school_tb: Vec<TieBreakerId> = market.schools.iter().map(|s| s.tie_breaker).collect();
        let school_lottery = school_tb.iter().map(|&v| market.is_lottery(v)).collect();

        let mut list_offsets = Vec::with_capacity(n + 1);
        let mut entries = Vec::new();
        let mut slot_offsets = Vec::with_capacity(n + 1);
        let mut slot_tb = Vec::new();
        let mut values = Vec::new();
        list_offsets.push(0);
        slot_offsets.push(0);
        for app in &market.applicants {
            let slot_start = slot_tb.len();
            for &s in &app.kind.preferences {
                let school = school_pos[&s];
                let tb = school_tb[school];
                let slot = match slot_tb[slot_start..].iter().position(|&v| v == tb) {
                    Some(k) => slot_start + k,
                    None => {
                        slot_tb.push(tb);
                        values.push(app.tie_breakers[&tb]);
                        slot_tb.len() - 1
                    }
                };
                let priority = match app.kind.priority_at(s) {
                    Some(Priority::Level(p)) => p,
                    _ => INELIGIBLE,
                };
                entries.push(Entry { school: school as u32, priority, slot: slot as u32 });
            }
            list_offsets.push(entries.len());
            slot_offsets.push(slot_tb.len());
        }
        let applicant_ids: Vec<ApplicantId> = market.applicants.iter().map(|a| a.id).collect();
        let applicant_pos = applicant_ids.iter().enumerate().map(|(i, &a)| (a, i)).collect();
        MarketIndex {
            school_ids,
            school_pos,
            seats,
            school_tb,
            school_lottery,
            applicant_ids,
            applicant_pos,
            list_offsets,
            entries,
            slot_offsets,
            slot_tb,
            values,
            lottery_count: market.lottery_count,
            max_priority: market.max_priority,
        }
    }

    pub fn school_count(&self) -> usize {
        self.school_ids.len()
    }

    pub fn applicant_count(&self) -> usize {
        self.applicant_ids.len()
    }

    pub fn school_index(&self, id: SchoolId) -> Option<usize> {
        self.school_pos.get(&id).copied()
    }

    pub fn applicant_index(&self, id: ApplicantId) -> Option<usize> {
        self.applicant_pos.get(&id).copied()
    }

    /// Ranked schools of applicant `i`, most preferred first.
    pub fn ranked(&self, i: usize) -> &[Entry] {
        &self.entries[self.list_offsets[i]..self.list_offsets[i + 1]]
    }

    /// Longest ranked list.
    pub fn ranked_max_len(&self) -> usize {
        self.list_offsets.windows(2).map(|w| w[1] - w[0]).max().unwrap_or(0)
    }

    pub fn value(&self, entry: &Entry) -> T {
        self.values[entry.slot as usize]
    }

    /// Slots holding applicant `i`'s tie-breaker values.
    pub fn slots(&self, i: usize) -> Range<usize> {
        self.slot_offsets[i]..self.slot_offsets[i + 1]
    }

    pub fn slot_tie_breaker(&self, slot: usize) -> TieBreakerId {
        self.slot_tb[slot]
    }

    pub fn entry_tie_breaker(&self, entry: &Entry) -> TieBreakerId {
        self.school_tb[entry.school as usize]
    }

    pub fn is_lottery_school(&self, school: usize) -> bool {
        self.school_lottery[school]
    }

    /// Replaces every tie-breaker value; `draw` receives (applicant index,
    /// tie-breaker) and must return a value in `(0, 1]`.
    pub fn redraw(&mut self, mut draw: impl FnMut(usize, TieBreakerId) -> T) {
        for i in 0..self.applicant_ids.len() {
            for slot in self.slot_offsets[i]..self.slot_offsets[i + 1] {
                self.values[slot] = draw(i, self.slot_tb[slot]);
            }
        }
    }

    pub fn require_school(&self, id: SchoolId) -> Result<usize> {
        self.school_index(id).ok_or(Error::UnknownSchool(id))
    }
}
