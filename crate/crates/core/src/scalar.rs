//! Scalar abstraction shared by the risk functionals and the backward-induction solver.
//!
//! Anything that forms an ordered field and converts to and from `f64` works: `f32`, `f64`
//! and exact big rationals. Transcendental model inputs (normal CDFs, softplus, the price
//! decay factor) are always evaluated in `f64` and lifted with [`Scalar::lit`]; for
//! [`BigRational`] that lift is exact, so everything downstream of it is exact too.

use std::fmt::Debug;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{FromPrimitive, Num, ToPrimitive};

pub trait Scalar:
    Num + Clone + PartialOrd + Debug + FromPrimitive + ToPrimitive + Send + Sync + 'static
{
    /// Lift an `f64` model constant into this scalar type.
    ///
    /// Panics on non-finite input; model inputs are validated before they get here.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).unwrap_or_else(|| panic!("cannot represent {x} as a scalar"))
    }

    fn is_finite_value(&self) -> bool;

    /// Slack within which two objective values count as tied when picking the smallest
    /// minimizer. Zero for exact types.
    fn tie_tolerance(scale: &Self) -> Self;

    fn as_f64(&self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    fn min_of(self, other: Self) -> Self {
        if other < self {
            other
        } else {
            self
        }
    }

    fn max_of(self, other: Self) -> Self {
        if other > self {
            other
        } else {
            self
        }
    }
}

impl Scalar for f64 {
    fn is_finite_value(&self) -> bool {
        self.is_finite()
    }

    fn tie_tolerance(scale: &Self) -> Self {
        1e-11 * scale.abs().max(1.0)
    }
}

impl Scalar for f32 {
    fn is_finite_value(&self) -> bool {
        self.is_finite()
    }

    fn tie_tolerance(scale: &Self) -> Self {
        1e-4 * scale.abs().max(1.0)
    }
}

impl Scalar for BigRational {
    fn lit(x: f64) -> Self {
        BigRational::from_float(x).unwrap_or_else(|| panic!("cannot represent {x} as a rational"))
    }

    fn is_finite_value(&self) -> bool {
        true
    }

    fn tie_tolerance(_: &Self) -> Self {
        BigRational::from_integer(0.into())
    }
}

/// Exact rational `num / den`, handy for building exact risk parameters.
pub fn ratio(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}
