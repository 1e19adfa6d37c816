use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

/// Scalar type that the numerical kernels are generic over.
///
/// Implemented for plain `f64` (fast evaluation), for tape variables
/// (reverse-mode gradients) and for forward-mode duals (input Jacobians of
/// closed-form systems). Mixed arithmetic with `f64` constants never records
/// a node for the constant itself.
pub trait Real:
    Copy
    + Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    /// Primal value.
    fn value(self) -> f64;

    /// A constant living in the same context as `self`.
    fn lift(self, c: f64) -> Self;

    fn tanh(self) -> Self;
    fn sqrt(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;

    fn powi(self, n: i32) -> Self {
        match n {
            0 => self.lift(1.0),
            n if n < 0 => self.powi(-n).recip(),
            _ => {
                let mut acc = self;
                for _ in 1..n {
                    acc = acc * self;
                }
                acc
            }
        }
    }

    fn recip(self) -> Self {
        self.lift(1.0) / self
    }

    fn square(self) -> Self {
        self * self
    }

    /// `1 - self²`, the tanh derivative expressed through its output.
    fn one_minus_square(self) -> Self {
        -(self * self) + 1.0
    }

    /// `bias + Σ w_j x_j`, with a single fused node for tape variables.
    fn dot_add(w: &[Self], x: &[Self], bias: Self) -> Self {
        debug_assert_eq!(w.len(), x.len());
        w.iter().zip(x).fold(bias, |acc, (&a, &b)| acc + a * b)
    }

    /// `Σ w_j x_j` with constant coefficients.
    fn lin_comb(coeffs: &[f64], x: &[Self]) -> Self {
        debug_assert_eq!(coeffs.len(), x.len());
        let mut acc = x[0] * coeffs[0];
        for (c, &v) in coeffs.iter().zip(x).skip(1) {
            acc = acc + v * *c;
        }
        acc
    }
}

impl Real for f64 {
    #[inline]
    fn value(self) -> f64 {
        self
    }
    #[inline]
    fn lift(self, c: f64) -> Self {
        c
    }
    #[inline]
    fn tanh(self) -> Self {
        f64::tanh(self)
    }
    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    #[inline]
    fn exp(self) -> Self {
        f64::exp(self)
    }
    #[inline]
    fn ln(self) -> Self {
        f64::ln(self)
    }
    #[inline]
    fn sin(self) -> Self {
        f64::sin(self)
    }
    #[inline]
    fn cos(self) -> Self {
        f64::cos(self)
    }
    #[inline]
    fn powi(self, n: i32) -> Self {
        f64::powi(self, n)
    }
    #[inline]
    fn dot_add(w: &[Self], x: &[Self], bias: Self) -> Self {
        w.iter().zip(x).fold(bias, |acc, (a, b)| acc + a * b)
    }
}

/// Lifts a slice of constants next to `like`.
pub fn lift_all<R: Real>(like: R, xs: &[f64]) -> Vec<R> {
    xs.iter().map(|&x| like.lift(x)).collect()
}

/// Primal values of a slice.
pub fn values<R: Real>(xs: &[R]) -> Vec<f64> {
    xs.iter().map(|x| x.value()).collect()
}
