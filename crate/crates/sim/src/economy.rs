//! Tie-breaker distribution families, market templates and finite-type
//! economies from which markets of any size can be sampled.

use std::collections::BTreeMap;

use localscore_core::market::{Applicant, ApplicantType, Market, School, TieBreakerId};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::dist::TieBreakerDist;
use crate::error::{Error, Result};

static UNIFORM: TieBreakerDist = TieBreakerDist::Uniform;

/// Tie-breaker distributions used when redrawing. Screened tie-breakers
/// default to `default[v]` (uniform when absent); applicants assigned to a
/// group use that group's entry instead where it has one. Lottery
/// tie-breakers are always uniform.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CdfFamily {
    pub default: BTreeMap<TieBreakerId, TieBreakerDist>,
    pub groups: Vec<BTreeMap<TieBreakerId, TieBreakerDist>>,
}

impl CdfFamily {
    pub fn uniform() -> Self {
        CdfFamily::default()
    }

    pub fn dist(&self, group: Option<usize>, v: TieBreakerId) -> &TieBreakerDist {
        group
            .and_then(|g| self.groups.get(g))
            .and_then(|m| m.get(&v))
            .or_else(|| self.default.get(&v))
            .unwrap_or(&UNIFORM)
    }

    pub fn validate(&self, lottery_count: u32) -> Result<()> {
        for m in std::iter::once(&self.default).chain(&self.groups) {
            for (v, d) in m {
                d.validate()?;
                if v.0 <= lottery_count && !d.is_uniform() {
                    return Err(Error::Config(format!("lottery tie-breaker {v} must be uniform")));
                }
            }
        }
        Ok(())
    }
}

/// A market whose tie-breakers are redrawn from `cdfs`. `groups[i]` selects
/// the distribution group of the i-th applicant.
#[derive(Debug, Clone)]
pub struct MarketTemplate {
    pub market: Market<f64>,
    pub groups: Vec<Option<usize>>,
    pub cdfs: CdfFamily,
}

impl MarketTemplate {
    pub fn new(market: Market<f64>, cdfs: CdfFamily) -> Self {
        let groups = vec![None; market.applicants.len()];
        MarketTemplate { market, groups, cdfs }
    }

    pub fn validate(&self) -> Result<()> {
        if self.groups.len() != self.market.applicants.len() {
            return Err(Error::Config("one group entry per applicant required".into()));
        }
        self.cdfs.validate(self.market.lottery_count)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EconomyType {
    pub kind: ApplicantType,
    pub weight: f64,
    #[serde(default)]
    pub group: Option<usize>,
}

/// Finite-type economy: a type distribution plus schools with capacities
/// given as shares of the market.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Economy {
    pub schools: Vec<School>,
    pub lottery_count: u32,
    pub max_priority: u32,
    pub types: Vec<EconomyType>,
    pub cdfs: CdfFamily,
}

impl Economy {
    /// Samples `n` applicants i.i.d. from the type distribution and draws
    /// their tie-breakers. Deterministic in `seed`.
    pub fn sample(&self, n: usize, seed: u64) -> Result<MarketTemplate> {
        let weights = WeightedIndex::new(self.types.iter().map(|t| t.weight))
            .map_err(|e| Error::Config(format!("type weights: {e}")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let picks: Vec<usize> = (0..n).map(|_| weights.sample(&mut rng)).collect();
        self.build(&picks, &mut rng)
    }

    /// Like [`Economy::sample`] but with type counts fixed at the
    /// largest-remainder apportionment of `n` by weight, so the sample's type
    /// shares match the economy's up to rounding. Only tie-breakers are random.
    pub fn sample_stratified(&self, n: usize, seed: u64) -> Result<MarketTemplate> {
        let total: f64 = self.types.iter().map(|t| t.weight).sum();
        if self.types.is_empty() || !(total > 0.0) || self.types.iter().any(|t| !(t.weight >= 0.0)) {
            return Err(Error::Config("type weights must be non-negative with a positive sum".into()));
        }
        let exact: Vec<f64> = self.types.iter().map(|t| t.weight / total * n as f64).collect();
        let mut counts: Vec<usize> = exact.iter().map(|x| x.floor() as usize).collect();
        let mut order: Vec<usize> = (0..exact.len()).collect();
        order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
        let short = n - counts.iter().sum::<usize>();
        for &k in order.iter().take(short) {
            counts[k] += 1;
        }
        let picks: Vec<usize> = counts.iter().enumerate().flat_map(|(k, &c)| std::iter::repeat_n(k, c)).collect();
        self.build(&picks, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    fn build(&self, picks: &[usize], rng: &mut ChaCha8Rng) -> Result<MarketTemplate> {
        self.cdfs.validate(self.lottery_count)?;
        let n = picks.len();
        let mut market = Market::new(self.lottery_count, self.max_priority);
        market.schools = self.schools.clone();
        let tb_of: BTreeMap<_, _> = self.schools.iter().map(|s| (s.id, s.tie_breaker)).collect();
        let mut groups = Vec::with_capacity(n);
        for (i, &pick) in picks.iter().enumerate() {
            let t = &self.types[pick];
            let mut a = Applicant::new(i as u32 + 1, t.kind.clone());
            for s in &t.kind.preferences {
                let v = *tb_of
                    .get(s)
                    .ok_or_else(|| Error::Config(format!("type ranks unknown school {s}")))?;
                if !a.tie_breakers.contains_key(&v) {
                    let x = self.cdfs.dist(t.group, v).sample(rng);
                    a.tie_breakers.insert(v, x);
                }
            }
            market.applicants.push(a);
            groups.push(t.group);
        }
        Ok(MarketTemplate { market, groups, cdfs: self.cdfs.clone() })
    }
}
