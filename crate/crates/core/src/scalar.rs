//! Scalar abstraction shared by every numeric routine in the crate.
//!
//! Plant models, operators and losses are written once against [`Scalar`]
//! and run either on plain floats (`f64`, `f32`) for fast simulation or on
//! [`Var`](crate::autodiff::Var) to record a reverse-mode tape.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive};

pub trait Scalar:
    Float + FromPrimitive + AddAssign + SubAssign + MulAssign + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Lifts a constant into the scalar type.
    fn cst(v: f64) -> Self;

    /// Numeric value, dropping any derivative information.
    fn val(self) -> f64;

    /// Inner product. Tape scalars override this to record a single node.
    fn dot(a: &[Self], b: &[Self]) -> Self {
        debug_assert_eq!(a.len(), b.len());
        let mut acc = Self::zero();
        for (x, y) in a.iter().zip(b) {
            acc += *x * *y;
        }
        acc
    }

    /// Sum of a slice.
    fn sum_of(xs: &[Self]) -> Self {
        let mut acc = Self::zero();
        for x in xs {
            acc += *x;
        }
        acc
    }

    /// Rectifier with `relu'(0) = 0`.
    fn relu(self) -> Self {
        if self > Self::zero() {
            self
        } else {
            Self::zero()
        }
    }

    /// Minimum that keeps the first argument on ties.
    fn min_first(self, other: Self) -> Self {
        if other < self {
            other
        } else {
            self
        }
    }

    /// Maximum that keeps the first argument on ties.
    fn max_first(self, other: Self) -> Self {
        if other > self {
            other
        } else {
            self
        }
    }
}

impl Scalar for f64 {
    #[inline]
    fn cst(v: f64) -> Self {
        v
    }

    #[inline]
    fn val(self) -> f64 {
        self
    }
}

impl Scalar for f32 {
    #[inline]
    fn cst(v: f64) -> Self {
        v as f32
    }

    #[inline]
    fn val(self) -> f64 {
        self as f64
    }
}

/// Lifts a slice of constants.
pub fn lift<S: Scalar>(xs: &[f64]) -> Vec<S> {
    xs.iter().map(|&v| S::cst(v)).collect()
}

/// Drops derivative information from a slice.
pub fn values<S: Scalar>(xs: &[S]) -> Vec<f64> {
    xs.iter().map(|v| v.val()).collect()
}

/// Squared Euclidean norm.
pub fn norm_sq<S: Scalar>(xs: &[S]) -> S {
    S::dot(xs, xs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ties_keep_first_argument() {
        assert_eq!(2.0f64.min_first(2.0), 2.0);
        assert_eq!(1.0f64.max_first(3.0), 3.0);
        assert_eq!(0.0f64.relu(), 0.0);
        assert_eq!((-1.5f64).relu(), 0.0);
    }

    #[test]
    fn f32_dot_matches_f64() {
        let a = [1.0f32, 2.0, 3.0];
        let b = [0.5f32, -1.0, 2.0];
        assert!((f32::dot(&a, &b).val() - 4.5).abs() < 1e-6);
    }
}
