//! Configurable synthetic school-choice markets with planted outcomes.
//!
//! A latent ability `z ~ N(0, 1)` drives preferences (a tilt toward schools
//! in the treated sector), the distribution of screened tie-breakers (via
//! ability classes) and outcomes. An unobserved `u ~ N(0, 1)` shifts both
//! enrollment and outcomes:
//!
//! ```text
//! C_A = D_A + phi * u
//! Y   = beta * C_A + kappa_ability * z + kappa_u * u + noise
//! ```
//!
//! where `D_A` marks assignment to a school carrying the sector tag.

use std::collections::BTreeMap;

use localscore_core::market::{Applicant, ApplicantId, ApplicantType, Capacity, Market, Priority, School, SchoolId, TieBreakerId};
use localscore_core::run_da;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gumbel, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dist::TieBreakerDist;
use crate::economy::{CdfFamily, Economy, EconomyType, MarketTemplate};
use crate::error::{Error, Result};
use crate::oracle::replicate_rng;

/// Longest preference list accepted.
pub const MAX_LIST: usize = 12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchoolSpec {
    pub id: u32,
    pub capacity: Capacity,
    pub tie_breaker: u32,
    #[serde(default)]
    pub tags: Vec<String>,
    /// Relative popularity; enters utilities as `ln(popularity)`.
    #[serde(default = "one")]
    pub popularity: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeSpec {
    pub beta: f64,
    pub kappa_ability: f64,
    pub kappa_u: f64,
    pub phi: f64,
    pub noise_sd: f64,
    /// Share of outcomes set missing at random.
    #[serde(default)]
    pub missing_rate: f64,
}

impl Default for OutcomeSpec {
    fn default() -> Self {
        OutcomeSpec { beta: 0.25, kappa_ability: 0.5, kappa_u: 0.5, phi: 0.5, noise_sd: 1.0, missing_rate: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n: usize,
    pub seed: u64,
    pub schools: Vec<SchoolSpec>,
    pub lottery_count: u32,
    /// Probability of each finite priority level `1..=K`.
    pub priority_weights: Vec<f64>,
    #[serde(default)]
    pub ineligible_rate: f64,
    pub min_list: usize,
    pub max_list: usize,
    /// Screened tie-breaker distributions by ability class (one entry means
    /// no dependence on ability). Screened tie-breakers not listed are uniform.
    #[serde(default)]
    pub screened: BTreeMap<TieBreakerId, Vec<TieBreakerDist>>,
    /// Ascending ability thresholds separating the classes.
    #[serde(default)]
    pub ability_cuts: Vec<f64>,
    /// Tag of the treated sector.
    pub sector: String,
    /// Utility bonus per unit of ability for sector schools.
    #[serde(default)]
    pub sector_tilt: f64,
    /// Draw applicants from this many pre-generated types instead of giving
    /// each applicant its own preferences and priorities.
    #[serde(default)]
    pub type_pool: Option<usize>,
    /// Guarantee at least one first-ranker per (school, priority level).
    #[serde(default)]
    pub rich_support: bool,
    #[serde(default)]
    pub outcome: OutcomeSpec,
}

/// Ground truth written next to a generated market.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthTruth {
    pub seed: u64,
    pub beta: f64,
    pub sector: String,
    pub outcome: OutcomeSpec,
    pub screened: BTreeMap<TieBreakerId, Vec<TieBreakerDist>>,
    pub ability_cuts: Vec<f64>,
    /// Ability class of each applicant, indexing the screened lists.
    pub ability_class: BTreeMap<ApplicantId, usize>,
    pub ability: BTreeMap<ApplicantId, f64>,
    pub unobserved: BTreeMap<ApplicantId, f64>,
}

impl SynthConfig {
    /// Market of `programs` schools in which about `screened_share` of the
    /// schools screen applicants, each on its own tie-breaker, and the rest
    /// share one lottery. About a third carry the `GradeA` tag.
    pub fn mixed(n: usize, programs: usize, screened_share: f64, seed: u64) -> Self {
        let mut rng = replicate_rng(seed, u64::MAX);
        let mut schools = Vec::with_capacity(programs);
        let mut screened = BTreeMap::new();
        let mut next_tb = 2;
        let total_seats = 0.95;
        let pops: Vec<f64> = (0..programs).map(|_| rng.random_range(0.2..2.0)).collect();
        let pop_sum: f64 = pops.iter().sum();
        for (k, &pop) in pops.iter().enumerate() {
            let is_screened = rng.random_bool(screened_share);
            let tb = if is_screened {
                next_tb += 1;
                screened.insert(TieBreakerId(next_tb - 1), ability_dists());
                next_tb - 1
            } else {
                1
            };
            let mut tags = vec![if is_screened { "screened".to_string() } else { "lottery".to_string() }];
            if rng.random_bool(0.35) {
                tags.push("GradeA".into());
            } else {
                tags.push("ungraded".into());
            }
            schools.push(SchoolSpec {
                id: k as u32 + 1,
                capacity: Capacity::Fraction(total_seats * pop / pop_sum * 0.8),
                tie_breaker: tb,
                tags,
                popularity: pop,
            });
        }
        SynthConfig {
            n,
            seed,
            schools,
            lottery_count: 1,
            priority_weights: vec![0.3, 0.7],
            ineligible_rate: 0.0,
            min_list: 1,
            max_list: MAX_LIST.min(programs),
            screened,
            ability_cuts: vec![-0.5, 0.5],
            sector: "GradeA".into(),
            sector_tilt: 0.5,
            type_pool: None,
            rich_support: false,
            outcome: OutcomeSpec::default(),
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.priority_weights.is_empty() || self.priority_weights.iter().any(|&w| !(w >= 0.0)) {
            return bad("priority weights must be non-negative and non-empty");
        }
        if self.min_list > self.max_list || self.max_list > MAX_LIST {
            return bad("list lengths must satisfy min <= max <= 12");
        }
        if self.n > 0 && self.max_list > self.schools.len() {
            return bad("max_list exceeds school count");
        }
        if !(0.0..1.0).contains(&self.ineligible_rate) || !(0.0..1.0).contains(&self.outcome.missing_rate) {
            return bad("rates must lie in [0, 1)");
        }
        if self.ability_cuts.windows(2).any(|w| w[0] >= w[1]) {
            return bad("ability cuts must be increasing");
        }
        for (v, dists) in &self.screened {
            if v.0 <= self.lottery_count {
                return bad("screened distributions given for a lottery tie-breaker");
            }
            if dists.len() != 1 && dists.len() != self.ability_cuts.len() + 1 {
                return bad("one screened distribution, or one per ability class, required");
            }
            dists.iter().try_for_each(|d| d.validate())?;
        }
        if self.rich_support {
            let strata = self.schools.len() * self.priority_weights.len();
            if strata > self.n {
                return Err(Error::Config(format!(
                    "rich support needs {strata} distinct first-rankers but n = {}",
                    self.n
                )));
            }
        }
        Ok(())
    }

    /// The finite-type economy behind a `type_pool` config: each pooled type
    /// has equal weight and the screened distributions of its ability class.
    pub fn economy(&self) -> Result<Economy> {
        self.validate()?;
        let pool = self.type_pool.ok_or_else(|| Error::Config("economy needs a type pool".into()))?;
        let classes = self.ability_cuts.len() + 1;
        let groups = (0..classes)
            .map(|c| self.screened.iter().map(|(v, list)| (*v, list[c.min(list.len() - 1)].clone())).collect())
            .collect();
        let types = self
            .pool_types(pool)
            .into_iter()
            .map(|(kind, z)| EconomyType { kind, weight: 1.0, group: Some(self.ability_class(z)) })
            .collect();
        Ok(Economy {
            schools: self.market_schools(),
            lottery_count: self.lottery_count,
            max_priority: self.priority_weights.len() as u32,
            types,
            cdfs: CdfFamily { default: BTreeMap::new(), groups },
        })
    }

    /// Oracle template for a market generated from this config: the
    /// realized types and capacities, with tie-breakers redrawn from each
    /// applicant's ability-class distributions.
    pub fn template(&self, market: Market<f64>, truth: &SynthTruth) -> Result<MarketTemplate> {
        let classes = self.ability_cuts.len() + 1;
        let groups = market
            .applicants
            .iter()
            .map(|a| {
                truth
                    .ability_class
                    .get(&a.id)
                    .copied()
                    .map(Some)
                    .ok_or_else(|| Error::Config(format!("no ability class for applicant {}", a.id)))
            })
            .collect::<Result<Vec<_>>>()?;
        let cdfs = CdfFamily {
            default: BTreeMap::new(),
            groups: (0..classes)
                .map(|c| self.screened.iter().map(|(v, l)| (*v, l[c.min(l.len() - 1)].clone())).collect())
                .collect(),
        };
        let template = MarketTemplate { market, groups, cdfs };
        template.validate()?;
        Ok(template)
    }

    fn pool_types(&self, pool: usize) -> Vec<(ApplicantType, f64)> {
        let mut rng = replicate_rng(self.seed, u64::MAX - 1);
        (0..pool.max(1))
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                (draw_type(self, z, &mut rng), z)
            })
            .collect()
    }

    fn market_schools(&self) -> Vec<School> {
        self.schools
            .iter()
            .map(|s| {
                let mut school = School::new(s.id, s.capacity, s.tie_breaker);
                school.tags = s.tags.iter().cloned().collect();
                school
            })
            .collect()
    }

    fn ability_class(&self, z: f64) -> usize {
        self.ability_cuts.iter().filter(|&&c| z > c).count()
    }
}

/// Screened tie-breakers by ability class, low ability first. Lower values
/// are better, so high ability concentrates mass near 0.
pub fn ability_dists() -> Vec<TieBreakerDist> {
    vec![
        TieBreakerDist::Kumaraswamy { a: 2.0, b: 1.0 },
        TieBreakerDist::Uniform,
        TieBreakerDist::Kumaraswamy { a: 1.0, b: 2.0 },
    ]
}

fn draw_type(config: &SynthConfig, z: f64, rng: &mut ChaCha8Rng) -> ApplicantType {
    let gumbel = Gumbel::new(0.0, 1.0).expect("valid gumbel");
    let len = rng.random_range(config.min_list..=config.max_list);
    let mut utils: Vec<(f64, SchoolId)> = config
        .schools
        .iter()
        .map(|s| {
            let tilt = if s.tags.iter().any(|t| *t == config.sector) { config.sector_tilt * z } else { 0.0 };
            (s.popularity.ln() + tilt + gumbel.sample(rng), SchoolId(s.id))
        })
        .collect();
    if len < utils.len() {
        utils.select_nth_unstable_by(len, |a, b| b.0.total_cmp(&a.0));
        utils.truncate(len);
    }
    utils.sort_by(|a, b| b.0.total_cmp(&a.0));
    let total: f64 = config.priority_weights.iter().sum();
    let priorities = utils
        .iter()
        .map(|&(_, s)| {
            let p = if rng.random::<f64>() < config.ineligible_rate {
                Priority::Ineligible
            } else {
                let mut x = rng.random::<f64>() * total;
                let mut level = config.priority_weights.len() as u32;
                for (k, w) in config.priority_weights.iter().enumerate() {
                    if x < *w {
                        level = k as u32 + 1;
                        break;
                    }
                    x -= w;
                }
                Priority::Level(level)
            };
            (s, p)
        })
        .collect();
    ApplicantType { preferences: utils.into_iter().map(|u| u.1).collect(), priorities }
}

/// (school, priority level) strata without an applicant ranking the school
/// first at that level.
pub fn missing_strata<T: localscore_core::Scalar>(market: &Market<T>) -> Vec<(SchoolId, u32)> {
    let mut seen = std::collections::BTreeSet::new();
    for a in &market.applicants {
        if let Some(&s) = a.kind.preferences.first() {
            if let Some(Priority::Level(p)) = a.kind.priority_at(s) {
                seen.insert((s, p));
            }
        }
    }
    market
        .schools
        .iter()
        .flat_map(|s| (1..=market.max_priority).map(move |p| (s.id, p)))
        .filter(|k| !seen.contains(k))
        .collect()
}

struct Draw {
    kind: ApplicantType,
    z: f64,
    u: f64,
    noise: f64,
    female: bool,
    baseline: f64,
    low_income: bool,
    missing: bool,
    tie_breakers: BTreeMap<TieBreakerId, f64>,
}

/// Generates a market and its ground truth. Deterministic in `config.seed`.
pub fn generate(config: &SynthConfig) -> Result<(Market<f64>, SynthTruth)> {
    config.validate()?;
    let mut market = Market::new(config.lottery_count, config.priority_weights.len() as u32);
    market.schools = config.market_schools();
    let mut truth = SynthTruth {
        seed: config.seed,
        beta: config.outcome.beta,
        sector: config.sector.clone(),
        outcome: config.outcome.clone(),
        screened: config.screened.clone(),
        ability_cuts: config.ability_cuts.clone(),
        ability_class: BTreeMap::new(),
        ability: BTreeMap::new(),
        unobserved: BTreeMap::new(),
    };
    if config.n == 0 {
        return Ok((market, truth));
    }
    let tb_of: BTreeMap<SchoolId, TieBreakerId> = market.schools.iter().map(|s| (s.id, s.tie_breaker)).collect();

    let pool = config.type_pool.map(|p| config.pool_types(p));

    let mut draws: Vec<Draw> = (0..config.n)
        .into_par_iter()
        .map(|i| {
            let mut rng = replicate_rng(config.seed, i as u64);
            let e: f64 = StandardNormal.sample(&mut rng);
            let (kind, z) = match &pool {
                Some(pool) => {
                    let (kind, zt) = &pool[rng.random_range(0..pool.len())];
                    (kind.clone(), std::f64::consts::FRAC_1_SQRT_2 * (zt + e))
                }
                None => (draw_type(config, e, &mut rng), e),
            };
            let u: f64 = StandardNormal.sample(&mut rng);
            let noise: f64 = StandardNormal.sample(&mut rng);
            let n1: f64 = StandardNormal.sample(&mut rng);
            let n2: f64 = StandardNormal.sample(&mut rng);
            let female = rng.random_bool(0.5);
            let missing = rng.random::<f64>() < config.outcome.missing_rate;
            // tie-breaker draws use their own stream so list edits below do
            // not shift the other draws
            Draw {
                kind,
                z,
                u,
                noise: config.outcome.noise_sd * noise,
                female,
                baseline: z + 0.5 * n1,
                low_income: z + n2 < -0.5,
                missing,
                tie_breakers: BTreeMap::new(),
            }
        })
        .collect();

    if config.rich_support {
        let probe = Market {
            schools: market.schools.clone(),
            applicants: draws
                .iter()
                .enumerate()
                .map(|(i, d)| Applicant::<f64>::new(i as u32 + 1, d.kind.clone()))
                .collect(),
            lottery_count: market.lottery_count,
            max_priority: market.max_priority,
        };
        let missing = missing_strata(&probe);
        // donors: applicants whose own first choice stratum has other members
        let mut counts: BTreeMap<(SchoolId, u32), usize> = BTreeMap::new();
        let first = |d: &Draw| {
            d.kind.preferences.first().and_then(|&s| match d.kind.priority_at(s) {
                Some(Priority::Level(p)) => Some((s, p)),
                _ => None,
            })
        };
        for d in &draws {
            if let Some(k) = first(d) {
                *counts.entry(k).or_default() += 1;
            }
        }
        let mut order: Vec<usize> = (0..draws.len()).collect();
        order.shuffle(&mut replicate_rng(config.seed, u64::MAX - 2));
        let mut donors = order.into_iter();
        for (s, p) in missing {
            let donor = loop {
                let i = donors
                    .next()
                    .ok_or_else(|| Error::Config("not enough applicants for rich support".into()))?;
                match first(&draws[i]) {
                    Some(k) if counts[&k] <= 1 => continue,
                    Some(k) => {
                        *counts.get_mut(&k).expect("counted") -= 1;
                        break i;
                    }
                    None => break i,
                }
            };
            let kind = &mut draws[donor].kind;
            kind.preferences.retain(|&x| x != s);
            kind.preferences.insert(0, s);
            kind.preferences.truncate(config.max_list.max(1));
            kind.priorities.retain(|x, _| kind.preferences.contains(x));
            kind.priorities.insert(s, Priority::Level(p));
            counts.insert((s, p), 1);
        }
    }

    for (i, d) in draws.iter_mut().enumerate() {
        let mut rng = replicate_rng(config.seed ^ 0x9E37_79B9_7F4A_7C15, i as u64);
        let class = config.ability_class(d.z);
        for s in &d.kind.preferences {
            let v = *tb_of
                .get(s)
                .ok_or_else(|| Error::Config(format!("unknown school {s}")))?;
            if d.tie_breakers.contains_key(&v) {
                continue;
            }
            let dist = match config.screened.get(&v) {
                Some(list) if v.0 > config.lottery_count => &list[class.min(list.len() - 1)],
                _ => &TieBreakerDist::Uniform,
            };
            d.tie_breakers.insert(v, dist.sample(&mut rng));
        }
    }

    for (i, d) in draws.iter().enumerate() {
        let id = ApplicantId(i as u32 + 1);
        let mut a = Applicant::new(id.0, d.kind.clone());
        a.tie_breakers = d.tie_breakers.clone();
        a.covariates.insert("baseline".into(), d.baseline);
        a.covariates.insert("female".into(), if d.female { 1.0 } else { 0.0 });
        a.covariates.insert("low_income".into(), if d.low_income { 1.0 } else { 0.0 });
        market.applicants.push(a);
        truth.ability.insert(id, d.z);
        truth.unobserved.insert(id, d.u);
        truth.ability_class.insert(id, config.ability_class(d.z));
    }

    let outcome = run_da(&market)?;
    let sector: std::collections::HashSet<SchoolId> = market
        .schools
        .iter()
        .filter(|s| s.tags.contains(&config.sector))
        .map(|s| s.id)
        .collect();
    let o = &config.outcome;
    for (i, (a, d)) in market.applicants.iter_mut().zip(&draws).enumerate() {
        let treated = outcome.assignment[i].is_some_and(|s| sector.contains(&s));
        let d_a = if treated { 1.0 } else { 0.0 };
        let c_a = d_a + o.phi * d.u;
        a.enrollment.insert("C_A".into(), c_a);
        if !d.missing {
            let y = o.beta * c_a + o.kappa_ability * d.z + o.kappa_u * d.u + d.noise;
            a.outcomes.insert("Y".into(), y);
        }
    }
    Ok((market, truth))
}
