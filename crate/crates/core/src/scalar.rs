use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating-point type the planners and the LP solver are written against.
///
/// Implemented for `f32` and `f64`. Tolerances quoted throughout the crate are
/// meaningful for `f64`; with `f32` they are widened to a small multiple of
/// machine epsilon by [`Scalar::tol`].
pub trait Scalar:
    'static
    + Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Default
    + Debug
    + Display
    + LowerExp
    + Send
    + Sync
{
    /// Converts an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    /// Converts a count.
    #[inline]
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable")
    }

    /// A tolerance of `x`, never tighter than 64 ulps at 1.0.
    #[inline]
    fn tol(x: f64) -> Self {
        let floor = Self::epsilon() * Self::lit(64.0);
        Self::lit(x).max(floor)
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// `max + t·ln Σ exp((x − max)/t)`: the temperature-`t` log-sum-exp.
pub fn soft_maximum<T: Scalar>(values: impl IntoIterator<Item = T> + Clone, temperature: T) -> T {
    let max = values
        .clone()
        .into_iter()
        .fold(T::neg_infinity(), |m, v| m.max(v));
    if !max.is_finite() {
        return max;
    }
    let sum: T = values
        .into_iter()
        .map(|v| ((v - max) / temperature).exp())
        .sum();
    max + temperature * sum.ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn soft_maximum_of_equal_values() {
        let v = soft_maximum([-1.0f64, -1.0], 1.0);
        assert!((v - (-1.0 + 2f64.ln())).abs() < 1e-15);
    }

    #[test]
    fn soft_maximum_survives_huge_gaps() {
        let v = soft_maximum([0.0f64, -1e6], 0.5);
        assert!((v - 0.0).abs() < 1e-12);
        let v32 = soft_maximum([0.0f32, -1e6], 0.5);
        assert!(v32.abs() < 1e-6);
    }

    #[test]
    fn tol_is_widened_for_f32() {
        assert!(f32::tol(1e-12) > 1e-12);
        assert_eq!(f64::tol(1e-9), 1e-9);
    }
}
