//! Tie-breaker distributions on `(0, 1]` with matching samplers and CDFs.

use rand::Rng;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};
use statrs::distribution::ContinuousCDF;

use crate::error::{Error, Result};

/// A continuous distribution on the unit interval with positive density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TieBreakerDist {
    Uniform,
    /// `F(x) = x^k`.
    Power { k: f64 },
    /// `F(x) = 1 - (1 - x^a)^b`; closed-form quantile, cheap to sample.
    Kumaraswamy { a: f64, b: f64 },
    Beta { a: f64, b: f64 },
    Mixture { components: Vec<(f64, TieBreakerDist)> },
}

impl TieBreakerDist {
    pub fn validate(&self) -> Result<()> {
        let positive = |x: f64| x.is_finite() && x > 0.0;
        match self {
            TieBreakerDist::Uniform => Ok(()),
            TieBreakerDist::Power { k } if positive(*k) => Ok(()),
            TieBreakerDist::Kumaraswamy { a, b } | TieBreakerDist::Beta { a, b }
                if positive(*a) && positive(*b) =>
            {
                Ok(())
            }
            TieBreakerDist::Mixture { components } => {
                if components.is_empty() || components.iter().any(|(w, _)| !positive(*w)) {
                    return Err(Error::Config("mixture weights must be positive".into()));
                }
                components.iter().try_for_each(|(_, d)| d.validate())
            }
            other => Err(Error::Config(format!("invalid parameters in {other:?}"))),
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let x = x.clamp(0.0, 1.0);
        match self {
            TieBreakerDist::Uniform => x,
            TieBreakerDist::Power { k } => x.powf(*k),
            TieBreakerDist::Kumaraswamy { a, b } => 1.0 - (1.0 - x.powf(*a)).powf(*b),
            TieBreakerDist::Beta { a, b } => statrs::distribution::Beta::new(*a, *b)
                .expect("validated parameters")
                .cdf(x),
            TieBreakerDist::Mixture { components } => {
                let total: f64 = components.iter().map(|c| c.0).sum();
                components.iter().map(|(w, d)| w * d.cdf(x)).sum::<f64>() / total
            }
        }
    }

    /// Draws a value in `(0, 1]`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let x = match self {
            TieBreakerDist::Uniform => open_unit(rng),
            TieBreakerDist::Power { k } => open_unit(rng).powf(1.0 / k),
            TieBreakerDist::Kumaraswamy { a, b } => {
                let u = open_unit(rng);
                (1.0 - (1.0 - u).powf(1.0 / b)).powf(1.0 / a)
            }
            TieBreakerDist::Beta { a, b } => rand_distr::Beta::new(*a, *b).expect("validated parameters").sample(rng),
            TieBreakerDist::Mixture { components } => {
                let total: f64 = components.iter().map(|c| c.0).sum();
                let mut pick = rng.random::<f64>() * total;
                let mut chosen = &components[components.len() - 1].1;
                for (w, d) in components {
                    if pick < *w {
                        chosen = d;
                        break;
                    }
                    pick -= w;
                }
                return chosen.sample(rng);
            }
        };
        x.clamp(f64::MIN_POSITIVE, 1.0)
    }

    pub fn is_uniform(&self) -> bool {
        matches!(self, TieBreakerDist::Uniform)
    }
}

impl localscore_core::Cdf<f64> for TieBreakerDist {
    fn cdf(&self, x: f64) -> f64 {
        TieBreakerDist::cdf(self, x)
    }
}

/// Uniform draw on `(0, 1]`.
pub fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    1.0 - rng.random::<f64>()
}

/// Kolmogorov-Smirnov statistic of a sample against a CDF.
pub fn ks_statistic(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut xs = sample.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}
