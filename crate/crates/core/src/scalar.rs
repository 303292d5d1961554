//! Scalar abstraction for the numeric layers.
//!
//! Everything downstream of the tape (series values, estimators, curves,
//! bands) is generic over a floating scalar so the math is checkable at
//! `f32` as well as `f64`. The tape layer itself is deliberately concrete:
//! timestamps are integer nanoseconds and parsed prices are `f64`.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating scalar usable by the series, stats, facts, and synth layers.
///
/// A blanket impl covers any type with the listed bounds; in practice the
/// crate is instantiated at [`crate::Real`] (`f64`) and tests also exercise
/// `f32`.
pub trait Scalar:
    Float
    + NumAssign
    + FromPrimitive
    + ToPrimitive
    + Sum<Self>
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from `f64`, used when series are built from parsed
    /// tape prices.
    fn from_f64_lossy(x: f64) -> Self {
        Self::from_f64(x).expect("finite f64 converts into any Scalar")
    }

    /// Conversion from a count or index.
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count fits in Scalar")
    }
}

impl<T> Scalar for T where
    T: Float
        + NumAssign
        + FromPrimitive
        + ToPrimitive
        + Sum<Self>
        + Debug
        + Display
        + Default
        + Send
        + Sync
        + 'static
{
}

#[cfg(test)]
mod tests {
    use super::*;

    fn takes_scalar<F: Scalar>(x: F) -> F {
        x + F::one()
    }

    #[test]
    fn f32_and_f64_satisfy_scalar() {
        assert_eq!(takes_scalar(1.0f32), 2.0f32);
        assert_eq!(takes_scalar(1.0f64), 2.0f64);
    }

    #[test]
    fn from_count_round_trips_small_integers() {
        assert_eq!(f64::from_count(17), 17.0);
        assert_eq!(f32::from_count(1024), 1024.0);
    }
}
