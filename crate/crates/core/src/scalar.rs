//! Scalar abstractions.
//!
//! Graph matrices and the optimality oracle only need field arithmetic, so
//! they are written against [`Scalar`], which is implemented for `f32`, `f64`
//! and exact rationals. Time integration needs `sqrt`, `is_finite` and
//! friends and is written against [`Real`].

use std::fmt::{Debug, Display, LowerExp};
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Float, FromPrimitive, Signed, ToPrimitive, Zero};

/// Field-like scalar usable by the linear algebra and oracle code.
pub trait Scalar: Clone + Debug + PartialOrd + Signed + FromPrimitive + 'static {
    /// Relative pivot threshold under which a pivot is treated as zero.
    fn pivot_tolerance() -> Self;

    /// Absolute slack used for primal/dual feasibility tests.
    fn feasibility_tolerance() -> Self;

    fn to_f64_lossy(&self) -> f64;

    fn from_f64_exact(x: f64) -> Self {
        Self::from_f64(x).unwrap_or_else(|| panic!("{x} is not representable"))
    }

    fn max_of(a: Self, b: Self) -> Self {
        if a >= b {
            a
        } else {
            b
        }
    }

    fn min_of(a: Self, b: Self) -> Self {
        if a <= b {
            a
        } else {
            b
        }
    }
}

impl Scalar for f64 {
    fn pivot_tolerance() -> Self {
        1e-12
    }
    fn feasibility_tolerance() -> Self {
        1e-9
    }
    fn to_f64_lossy(&self) -> f64 {
        *self
    }
}

impl Scalar for f32 {
    fn pivot_tolerance() -> Self {
        1e-6
    }
    fn feasibility_tolerance() -> Self {
        1e-4
    }
    fn to_f64_lossy(&self) -> f64 {
        f64::from(*self)
    }
}

impl Scalar for BigRational {
    fn pivot_tolerance() -> Self {
        BigRational::zero()
    }
    fn feasibility_tolerance() -> Self {
        BigRational::zero()
    }
    fn to_f64_lossy(&self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
    fn from_f64_exact(x: f64) -> Self {
        BigRational::from_float(x).unwrap_or_else(|| panic!("{x} is not finite"))
    }
}

/// Convenience constructor for exact rationals in tests and examples.
pub fn rational(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

/// Floating-point scalar used by the simulators.
pub trait Real:
    Scalar + Float + Copy + Display + LowerExp + FromStr + Send + Sync + Default
{
    fn lit(x: f64) -> Self {
        <Self as num_traits::NumCast>::from(x).expect("literal out of range")
    }
}

impl Real for f64 {}
impl Real for f32 {}
