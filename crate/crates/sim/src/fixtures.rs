//! The six-school worked example with mixed tie-breaking, as a small exact
//! market and as a large-market economy.
//!
//! Schools are ranked 1 to 6 by the focal type. Schools 2 and 4 are lottery
//! schools on tie-breaker 1; schools 1 and 5 screen on tie-breaker 2, and
//! schools 3 and 6 on tie-breaker 3. The focal applicant is never seated at
//! 1, conditionally seated at 2 through 5 and surely seated at 6, giving
//! scores `(0, tau2, (1 - tau2)/2, max(0, tau4 - tau2)/2, (1 - max(tau2, tau4))/4, same)`.

use localscore_core::market::{Applicant, ApplicantId, ApplicantType, Capacity, Market, Priority, School, SchoolId, TieBreakerId};
use localscore_core::{da_global_score, run_da, MarketIndex, Scalar, ScoreContext};

use crate::error::Result;

use crate::economy::{CdfFamily, Economy, EconomyType};

/// Cutoffs of the screened schools 1, 3, 5 and 6.
pub const SCREENED_CUTOFFS: [(u32, (i64, i64)); 4] = [(1, (1, 5)), (3, (2, 5)), (5, (3, 5)), (6, (7, 10))];

pub const TIE_BREAKERS: [(u32, u32); 6] = [(1, 2), (2, 1), (3, 3), (4, 1), (5, 2), (6, 3)];

/// Id of the focal applicant in [`figure_market`].
pub const FOCAL: ApplicantId = ApplicantId(1);

const FILLERS: i64 = 10;

fn ratio<T: Scalar>(n: i64, d: i64) -> T {
    T::from_i64(n).expect("small integer") / T::from_i64(d).expect("small integer")
}

/// Type of the focal applicant.
pub fn focal_type() -> ApplicantType {
    let prefs: Vec<SchoolId> = (1..=6).map(SchoolId).collect();
    let mut priorities: std::collections::BTreeMap<SchoolId, Priority> =
        prefs.iter().map(|&s| (s, Priority::Level(1))).collect();
    priorities.insert(SchoolId(2), Priority::Level(2));
    ApplicantType { preferences: prefs, priorities }
}

fn single(school: u32, priority: u32) -> ApplicantType {
    ApplicantType {
        preferences: vec![SchoolId(school)],
        priorities: [(SchoolId(school), Priority::Level(priority))].into(),
    }
}

/// Small market whose deferred-acceptance cutoffs are exactly `tau2` and
/// `tau4` at the lottery schools and [`SCREENED_CUTOFFS`] elsewhere.
///
/// Each school gets ten admitted fillers at `tau - 3k/2000` (k = 0..9) and
/// ten rejected fillers at `tau + 3k/2000` (k = 1..10), all ranking only that
/// school, so bandwidths up to 0.0135 keep five observations per side.
/// School 2 also seats three priority-1 fillers, which puts its marginal
/// priority at 2. Requires `0.015 < tau < 0.985` for both lottery cutoffs.
pub fn figure_market<T: Scalar>(tau2: T, tau4: T) -> Market<T> {
    let mut m = Market::new(1, 2);
    let taus = |s: u32| -> T {
        match s {
            2 => tau2,
            4 => tau4,
            _ => {
                let (_, (n, d)) = SCREENED_CUTOFFS.iter().find(|c| c.0 == s).expect("screened school");
                ratio(*n, *d)
            }
        }
    };
    m.schools = TIE_BREAKERS
        .iter()
        .map(|&(s, v)| {
            let seats = match s {
                2 => FILLERS + 3,
                6 => FILLERS + 1,
                _ => FILLERS,
            };
            let mut school = School::new(s, Capacity::Seats(seats as u32), v);
            if v == 1 {
                school = school.with_tag("lottery");
            } else {
                school = school.with_tag("screened");
            }
            school
        })
        .collect();

    let mut focal = Applicant::new(FOCAL.0, focal_type());
    focal.tie_breakers = [
        (TieBreakerId(1), T::one()),
        (TieBreakerId(2), ratio(61, 100)),
        (TieBreakerId(3), ratio(81, 200)),
    ]
    .into();
    m.applicants.push(focal);

    let mut id = FOCAL.0 + 1;
    for &(s, v) in &TIE_BREAKERS {
        let tau = taus(s);
        let priority = if s == 2 { 2 } else { 1 };
        let step: T = ratio(3, 2000);
        for k in 0..FILLERS {
            let r = tau - step * T::from_i64(k).unwrap();
            let mut a = Applicant::new(id, single(s, priority));
            a.tie_breakers.insert(TieBreakerId(v), r);
            m.applicants.push(a);
            id += 1;
        }
        for k in 1..=FILLERS {
            let r = tau + step * T::from_i64(k).unwrap();
            let mut a = Applicant::new(id, single(s, priority));
            a.tie_breakers.insert(TieBreakerId(v), r);
            m.applicants.push(a);
            id += 1;
        }
        if s == 2 {
            for _ in 0..3 {
                let mut a = Applicant::new(id, single(2, 1));
                a.tie_breakers.insert(TieBreakerId(1), ratio(19, 20));
                m.applicants.push(a);
                id += 1;
            }
        }
    }
    m
}

/// Closed-form focal scores for schools 1 to 6.
pub fn figure_scores(tau2: f64, tau4: f64) -> [f64; 6] {
    [
        0.0,
        tau2,
        0.5 * (1.0 - tau2),
        0.5 * (tau4 - tau2).max(0.0),
        0.25 * (1.0 - tau2.max(tau4)),
        0.25 * (1.0 - tau2.max(tau4)),
    ]
}

/// Large-market version: the focal type takes share `focal_share`, and each
/// school gets an equal share of fillers ranking only it. Capacities are set
/// so that, in the continuum, the cutoffs are `tau2`, `tau4` and
/// [`SCREENED_CUTOFFS`] with every screened tie-breaker uniform.
pub fn figure_economy(tau2: f64, tau4: f64, focal_share: f64) -> Economy {
    figure_economy_with(tau2, tau4, focal_share, CdfFamily::uniform())
}

/// [`figure_economy`] with screened tie-breakers drawn from `cdfs` (its
/// `default` map; groups are ignored). Capacities keep the continuum cutoffs
/// at their targets under these distributions.
pub fn figure_economy_with(tau2: f64, tau4: f64, focal_share: f64, cdfs: CdfFamily) -> Economy {
    let filler_share = (1.0 - focal_share) / 6.0;
    let target = |s: u32| -> f64 {
        match s {
            2 => tau2,
            4 => tau4,
            _ => {
                let (_, (n, d)) = SCREENED_CUTOFFS.iter().find(|c| c.0 == s).expect("screened school");
                *n as f64 / *d as f64
            }
        }
    };

    // focal global scores at the target cutoffs
    let mut probe: Market<f64> = Market::new(1, 2);
    probe.schools = TIE_BREAKERS.iter().map(|&(s, v)| School::new(s, Capacity::Seats(1), v)).collect();
    let mut a = Applicant::new(1, focal_type());
    a.tie_breakers = [(TieBreakerId(1), 0.5), (TieBreakerId(2), 0.5), (TieBreakerId(3), 0.5)].into();
    probe.applicants.push(a);
    let index = MarketIndex::new(&probe).expect("valid probe market");
    let cutoffs: Vec<_> = TIE_BREAKERS
        .iter()
        .map(|&(s, _)| {
            let tau = target(s);
            let rho = if s == 2 { 2 } else { 1 };
            localscore_core::da::Cutoff {
                xi: rho as f64 + tau,
                marginal_priority: rho,
                tau,
                slack: false,
                seats: 1,
                assigned: 1,
                last_admitted: None,
            }
        })
        .collect();
    let deltas = vec![0.0; 6];
    let ctx = ScoreContext::new(&index, &cutoffs, &deltas);
    let family = cdfs.clone();
    let dist = |v: u32| family.dist(None, TieBreakerId(v));
    let maps: std::collections::BTreeMap<TieBreakerId, &dyn localscore_core::Cdf<f64>> = [
        (TieBreakerId(2), dist(2) as &dyn localscore_core::Cdf<f64>),
        (TieBreakerId(3), dist(3) as &dyn localscore_core::Cdf<f64>),
    ]
    .into();
    let focal_p = da_global_score(&ctx, &probe.applicants[0].kind, &maps).expect("valid cdfs");

    let schools = TIE_BREAKERS
        .iter()
        .zip(&focal_p)
        .map(|(&(s, v), &(_, p))| {
            let q = filler_share * dist(v).cdf(target(s)) + focal_share * p;
            School::new(s, Capacity::Fraction(q), v).with_tag(if v == 1 { "lottery" } else { "screened" })
        })
        .collect();
    let mut types = vec![EconomyType { kind: focal_type(), weight: focal_share, group: None }];
    for &(s, _) in &TIE_BREAKERS {
        let priority = if s == 2 { 2 } else { 1 };
        types.push(EconomyType { kind: single(s, priority), weight: filler_share, group: None });
    }
    Economy { schools, lottery_count: 1, max_priority: 2, types, cdfs }
}

/// Adjusts integer seat counts so the realized DA cutoffs of `market` sit as
/// close as possible to `targets` (school, marginal priority, tau). Each pass
/// bisects one school's seats with the others held fixed; passes repeat until
/// no seat count changes.
pub fn calibrate_seats(market: &mut Market<f64>, targets: &[(SchoolId, u32, f64)], max_passes: usize) -> Result<()> {
    let position = |m: &Market<f64>, s: SchoolId| -> Result<f64> {
        let out = run_da(m)?;
        let c = out.cutoff(s).ok_or(localscore_core::Error::UnknownSchool(s))?;
        // spare seats sit above any realized position
        Ok(if c.slack { f64::INFINITY } else { c.xi })
    };
    for _ in 0..max_passes {
        let mut changed = false;
        for &(s, rho, tau) in targets {
            let k = market
                .schools
                .iter()
                .position(|x| x.id == s)
                .ok_or(localscore_core::Error::UnknownSchool(s))?;
            let want = rho as f64 + tau;
            let rankers = market.applicants.iter().filter(|a| a.kind.preferences.contains(&s)).count() as u32;
            let before = market.schools[k].capacity;
            let (mut lo, mut hi) = (0u32, rankers);
            while lo < hi {
                let mid = lo + (hi - lo) / 2;
                market.schools[k].capacity = Capacity::Seats(mid);
                if position(market, s)? >= want {
                    hi = mid;
                } else {
                    lo = mid + 1;
                }
            }
            // lo is the fewest seats reaching the target; keep the closer of lo and lo - 1
            let mut best = lo;
            if lo > 0 {
                market.schools[k].capacity = Capacity::Seats(lo);
                let above = position(market, s)? - want;
                market.schools[k].capacity = Capacity::Seats(lo - 1);
                let below = want - position(market, s)?;
                if below < above {
                    best = lo - 1;
                }
            }
            market.schools[k].capacity = Capacity::Seats(best);
            changed |= before != Capacity::Seats(best);
        }
        if !changed {
            break;
        }
    }
    Ok(())
}

/// Cutoff targets of the figure configuration for [`calibrate_seats`].
pub fn figure_targets(tau2: f64, tau4: f64) -> Vec<(SchoolId, u32, f64)> {
    let mut t: Vec<(SchoolId, u32, f64)> =
        SCREENED_CUTOFFS.iter().map(|&(s, (n, d))| (SchoolId(s), 1, n as f64 / d as f64)).collect();
    t.push((SchoolId(2), 2, tau2));
    t.push((SchoolId(4), 1, tau4));
    t.sort_by_key(|x| x.0);
    t
}
