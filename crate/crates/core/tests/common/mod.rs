#![allow(dead_code)]

use std::collections::BTreeMap;

use localscore_core::market::{Applicant, ApplicantType, Capacity, Market, Priority, School, SchoolId, TieBreakerId};
use localscore_core::Scalar;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn kind(prefs: &[u32], prio: &[u32]) -> ApplicantType {
    ApplicantType {
        preferences: prefs.iter().map(|&s| SchoolId(s)).collect(),
        priorities: prefs
            .iter()
            .zip(prio)
            .map(|(&s, &p)| (SchoolId(s), if p == 0 { Priority::Ineligible } else { Priority::Level(p) }))
            .collect(),
    }
}

pub fn applicant<T: Scalar>(id: u32, kind: ApplicantType, values: &[(u32, T)]) -> Applicant<T> {
    let mut a = Applicant::new(id, kind);
    a.tie_breakers = values.iter().map(|&(v, r)| (TieBreakerId(v), r)).collect();
    a
}

/// One school per (id, seats, tie-breaker).
pub fn schools(spec: &[(u32, u32, u32)]) -> Vec<School> {
    spec.iter().map(|&(id, seats, tb)| School::new(id, Capacity::Seats(seats), tb)).collect()
}

/// Small random market with mixed tie-breakers, some ineligibility and
/// possibly zero-seat schools.
pub fn random_market(seed: u64) -> Market<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s_count = rng.random_range(1..=8u32);
    let n = rng.random_range(1..=50u32);
    let v_count = rng.random_range(1..=3u32);
    let u = rng.random_range(1..=v_count);
    let k = rng.random_range(1..=3u32);
    let mut market = Market::new(u, k);
    for s in 0..s_count {
        market.schools.push(School::new(
            s + 1,
            Capacity::Seats(rng.random_range(0..=10)),
            rng.random_range(1..=v_count),
        ));
    }
    market.lottery_count = u.min(market.tie_breaker_count());
    let ids: Vec<u32> = (1..=s_count).collect();
    for i in 0..n {
        let len = rng.random_range(0..=s_count as usize);
        let mut prefs = ids.clone();
        prefs.shuffle(&mut rng);
        prefs.truncate(len);
        let prio: Vec<u32> = prefs
            .iter()
            .map(|_| if rng.random_bool(0.05) { 0 } else { rng.random_range(1..=k) })
            .collect();
        let mut values = BTreeMap::new();
        for &s in &prefs {
            let tb = market.schools[(s - 1) as usize].tie_breaker;
            values.entry(tb).or_insert_with(|| 1.0 - rng.random::<f64>());
        }
        let mut a = Applicant::new(100 + i, kind(&prefs, &prio));
        a.tie_breakers = values;
        market.applicants.push(a);
    }
    market
}
