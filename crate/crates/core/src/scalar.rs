//! Floating-point scalar abstraction shared by every numeric routine.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// f32 or f64.
///
/// Checkpoints and dataset payloads are always 64-bit on disk; values are
/// widened with [`Scalar::to_f64_lossless`] and narrowed with [`Scalar::lit`].
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Tolerance used when asserting that a vector has unit norm.
    const NORM_TOLERANCE: f64;

    /// Converts an f64 literal. Never fails for finite input.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("finite f64 literal")
    }

    #[inline]
    fn to_f64_lossless(self) -> f64 {
        self.to_f64().expect("float widening")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize to float")
    }
}

impl Scalar for f32 {
    const NORM_TOLERANCE: f64 = 1e-5;
}

impl Scalar for f64 {
    const NORM_TOLERANCE: f64 = 1e-9;
}
