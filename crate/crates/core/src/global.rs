//! Large-market propensity scores for a known tie-breaker distribution.
//!
//! These are the limits the local scores approximate: given the cutoffs of a
//! large market and the CDF `F_v` of each tie-breaker, the probability that a
//! type is seated at each ranked school.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::market::{ApplicantType, Priority, SchoolId, TieBreakerId};
use crate::scalar::Scalar;
use crate::score::{Class, ScoreContext, ScoreScratch};
use crate::index::Entry;

/// Distribution function of a tie-breaker on `[0, 1]`.
pub trait Cdf<T> {
    fn cdf(&self, x: T) -> T;
}

impl<T, F: Fn(T) -> T> Cdf<T> for F {
    fn cdf(&self, x: T) -> T {
        self(x)
    }
}

/// Uniform(0, 1): `F(x) = x`.
#[derive(Debug, Clone, Copy, Default)]
pub struct UniformCdf;

impl<T: Scalar> Cdf<T> for UniformCdf {
    fn cdf(&self, x: T) -> T {
        x.max_of(T::zero()).min_of(T::one())
    }
}

const CDF_GRID: u32 = 100;
const CDF_TOLERANCE: f64 = 1e-9;

/// Checks `F(0) = 0`, `F(1) = 1` and monotonicity on a grid.
pub fn check_cdf<T: Scalar>(cdf: &dyn Cdf<T>) -> Result<()> {
    let at = |k: u32| {
        let x = T::from_u32(k).ok_or(Error::Overflow)? / T::from_u32(CDF_GRID).ok_or(Error::Overflow)?;
        Ok::<f64, Error>(cdf.cdf(x).to_f64_lossy())
    };
    let lo = at(0)?;
    let hi = at(CDF_GRID)?;
    if lo.is_nan() || lo.abs() > CDF_TOLERANCE {
        return Err(Error::InvalidCdf(format!("F(0) = {lo}")));
    }
    if hi.is_nan() || (hi - 1.0).abs() > CDF_TOLERANCE {
        return Err(Error::InvalidCdf(format!("F(1) = {hi}")));
    }
    let mut prev = lo;
    for k in 1..=CDF_GRID {
        let y = at(k)?;
        if y.is_nan() || y + CDF_TOLERANCE < prev {
            return Err(Error::InvalidCdf(format!("not monotone near x = {}", k as f64 / CDF_GRID as f64)));
        }
        prev = y;
    }
    Ok(())
}

fn entries_for<T: Scalar>(ctx: &ScoreContext<'_, T>, kind: &ApplicantType) -> Result<Vec<Entry>> {
    kind.preferences
        .iter()
        .map(|&s| {
            let school = ctx.index.require_school(s)?;
            let priority = match kind.priority_at(s) {
                Some(Priority::Level(p)) => p,
                _ => crate::index::INELIGIBLE,
            };
            Ok(Entry { school: school as u32, priority, slot: 0 })
        })
        .collect()
}

/// Serial-dictatorship score with a single tie-breaker of CDF `F`:
/// `max(0, F(tau_s) - F(MID))`, MID being the largest cutoff among
/// preferred schools (0 when there are none). Schools with spare seats have
/// cutoff 1.
pub fn sd_global_score<T: Scalar>(
    ctx: &ScoreContext<'_, T>,
    kind: &ApplicantType,
    cdf: &dyn Cdf<T>,
) -> Result<Vec<(SchoolId, T)>> {
    check_cdf(cdf)?;
    let first = ctx.index.school_tb.first().copied();
    if ctx.index.school_tb.iter().any(|&v| Some(v) != first) {
        return Err(Error::NotSerialDictatorship("a single tie-breaker shared by all schools"));
    }
    let mut mid = T::zero();
    let mut out = Vec::with_capacity(kind.preferences.len());
    for &s in &kind.preferences {
        let cutoff = &ctx.cutoffs[ctx.index.require_school(s)?];
        let tau = cutoff.sd_tau();
        let eligible = matches!(kind.priority_at(s), Some(Priority::Level(_)));
        let p = if eligible {
            (cdf.cdf(tau) - cdf.cdf(mid)).max_of(T::zero())
        } else {
            T::zero()
        };
        out.push((s, p));
        if eligible {
            mid = mid.max_of(tau);
        }
    }
    Ok(out)
}

/// DA score for a type with known tie-breaker CDFs. Lottery tie-breakers are
/// uniform regardless of `cdfs`; every screened tie-breaker used by a ranked
/// school must have an entry.
pub fn da_global_score<T: Scalar>(
    ctx: &ScoreContext<'_, T>,
    kind: &ApplicantType,
    cdfs: &BTreeMap<TieBreakerId, &dyn Cdf<T>>,
) -> Result<Vec<(SchoolId, T)>> {
    let lottery_count = ctx.index.lottery_count;
    for &s in &kind.preferences {
        let v = ctx.index.school_tb[ctx.index.require_school(s)?];
        if v.0 > lottery_count {
            let f = cdfs.get(&v).ok_or(Error::UnknownTieBreaker(v))?;
            check_cdf(*f)?;
        }
    }
    let f = |v: TieBreakerId, x: T| -> T {
        if v.0 <= lottery_count {
            UniformCdf.cdf(x)
        } else {
            cdfs[&v].cdf(x)
        }
    };

    let entries = entries_for(ctx, kind)?;
    let classes = vec![Class::Never; entries.len()];
    let mut scratch = ScoreScratch::new();
    let mut out = Vec::with_capacity(entries.len());
    ctx.walk(&entries, &classes, &mut scratch, |pos, _, states| {
        let e = &entries[pos];
        let s = e.school as usize;
        let own = ctx.index.school_tb[s];
        let cutoff = &ctx.cutoffs[s];
        let mut prod_other = T::one();
        let mut mid_own = T::zero();
        for st in states {
            if st.tie_breaker == own {
                mid_own = st.mid();
            } else {
                prod_other = prod_other * (T::one() - f(st.tie_breaker, st.mid()));
            }
        }
        let p = if e.priority == crate::index::INELIGIBLE || e.priority > cutoff.marginal_priority {
            T::zero()
        } else if e.priority < cutoff.marginal_priority {
            prod_other * (T::one() - f(own, mid_own))
        } else {
            prod_other * (f(own, cutoff.tau) - f(own, mid_own)).max_of(T::zero())
        };
        out.push((ctx.index.school_ids[s], p));
    });
    Ok(out)
}
