//! Scalar abstraction for numeric code.
//!
//! Everything numeric in this crate is generic over [`Real`], a closed
//! shorthand for "an IEEE float that ndarray can do linear algebra with".
//! Only `f32` and `f64` implement it; the blanket impl exists so the bound
//! stays a single name at use sites.

use std::fmt::{Debug, Display};

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// Floating-point scalar usable throughout the crate.
///
/// Combines the `num-traits` float surface (transcendentals, constants,
/// conversions) with the ndarray operand traits needed for GEMM-backed
/// layers. Implemented for `f32` and `f64`.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + ScalarOperand
    + LinalgScalar
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from `f64`, for literals and precomputed constants.
    #[inline]
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("finite f64 converts to any Real")
    }

    /// Lossy conversion to `f64`, for reporting and cross-type checks.
    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("Real converts to f64")
    }
}

impl<T> Real for T where
    T: Float
        + FloatConst
        + FromPrimitive
        + ToPrimitive
        + NumAssign
        + ScalarOperand
        + LinalgScalar
        + Debug
        + Display
        + Send
        + Sync
        + 'static
{
}
