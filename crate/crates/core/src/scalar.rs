//! Scalar abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Real floating-point type the estimator can run on (`f32` or `f64`).
pub trait Scalar:
    Float + FloatConst + FromPrimitive + ToPrimitive + Sum + Default + Debug + Display + Send + Sync + 'static
{
    /// Converts an `f64` constant into `Self`.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable")
    }

    /// Converts a sample index or count into `Self`.
    #[inline]
    fn from_index(n: i64) -> Self {
        Self::from_i64(n).expect("index representable")
    }

    /// Lossless widening to `f64` for diagnostics and error payloads.
    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Relative tolerance below which two values are treated as equal by
    /// rank and degeneracy checks.
    fn rank_eps() -> Self;
}

impl Scalar for f32 {
    fn rank_eps() -> Self {
        1e-5
    }
}

impl Scalar for f64 {
    fn rank_eps() -> Self {
        1e-10
    }
}

/// Wraps a phase into `(-π, π]`.
pub fn wrap_phase<T: Scalar>(a: T) -> T {
    let two_pi = T::TAU();
    let mut w = a - two_pi * (a / two_pi).round();
    if w <= -T::PI() {
        w = w + two_pi;
    } else if w > T::PI() {
        w = w - two_pi;
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_phase_range() {
        for k in -50..50 {
            let a = k as f64 * 0.37;
            let w = wrap_phase(a);
            assert!(w > -std::f64::consts::PI && w <= std::f64::consts::PI);
            let d = (a - w) / std::f64::consts::TAU;
            assert!((d - d.round()).abs() < 1e-12);
        }
        assert_eq!(wrap_phase(std::f64::consts::PI), std::f64::consts::PI);
        assert_eq!(wrap_phase(-std::f64::consts::PI), std::f64::consts::PI);
    }
}
