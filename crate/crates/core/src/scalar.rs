//! Floating-point scalar abstraction shared by every numeric kernel.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::str::FromStr;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};
use rustfft::FftNum;

/// Real scalar type the crate is generic over: `f32` or `f64`.
///
/// `FftNum` pulls in `num_traits::Signed`, whose `abs`/`signum` shadow the
/// `Float` methods of the same name. Generic code calls `Float::abs(x)`
/// explicitly for that reason.
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + FftNum
    + Sum
    + Default
    + Display
    + Debug
    + FromStr
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from an `f64` literal or parameter.
    fn lit(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).expect("f64 is representable in every Scalar")
    }

    /// Conversion to `f64` for reporting and file output.
    fn to_f64_lossy(self) -> f64 {
        ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }

    /// Conversion from a count.
    fn from_count(n: usize) -> Self {
        <Self as FromPrimitive>::from_usize(n).expect("count is representable in every Scalar")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Total order on scalars that sorts NaN last. Kernels never produce NaN on
/// validated input; this only keeps comparisons panic-free.
pub(crate) fn total_cmp<T: Scalar>(a: T, b: T) -> std::cmp::Ordering {
    a.partial_cmp(&b).unwrap_or_else(|| a.is_nan().cmp(&b.is_nan()))
}
