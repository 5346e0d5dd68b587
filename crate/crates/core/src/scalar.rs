//! Scalar abstraction shared by the matching engine and the score formulas.
//!
//! Everything in this crate that touches tie-breakers, cutoffs or scores is
//! generic over [`Scalar`]. `f64` is the working type; `f32` works for quick
//! experiments and [`num_rational::Rational64`] gives exact arithmetic, which
//! the tests use to check score identities without rounding slack.

use std::fmt::Debug;

use num_traits::{FromPrimitive, Num, ToPrimitive};

/// Numeric type usable for tie-breakers, cutoffs and probabilities.
pub trait Scalar:
    Num + Copy + PartialOrd + FromPrimitive + ToPrimitive + Debug + Send + Sync + 'static
{
    /// `0.5`, built from ring operations so it is exact for rationals.
    fn half() -> Self {
        Self::one() / (Self::one() + Self::one())
    }

    /// Converts a priority level into the scalar line.
    fn from_priority(p: u32) -> Self {
        Self::from_u32(p).expect("priority representable in scalar type")
    }

    fn max_of(self, other: Self) -> Self {
        if other > self {
            other
        } else {
            self
        }
    }

    fn min_of(self, other: Self) -> Self {
        if other < self {
            other
        } else {
            self
        }
    }

    /// `0.5^m`.
    fn half_pow(m: u32) -> Self {
        let half = Self::half();
        (0..m).fold(Self::one(), |acc, _| acc * half)
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Whether the value is a usable number (rejects NaN for floats).
    fn is_comparable(self) -> bool {
        self.partial_cmp(&self).is_some()
    }
}

impl<T> Scalar for T where
    T: Num + Copy + PartialOrd + FromPrimitive + ToPrimitive + Debug + Send + Sync + 'static
{
}

/// Total order helper for values already validated as comparable.
pub(crate) fn cmp_scalar<T: Scalar>(a: &T, b: &T) -> std::cmp::Ordering {
    a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal)
}
