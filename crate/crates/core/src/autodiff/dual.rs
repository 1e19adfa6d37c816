//! First-order forward-mode dual numbers over any [`Real`].
//!
//! Used to take input Jacobians of closed-form systems. Nesting over tape
//! variables yields derivatives that remain differentiable with respect to
//! whatever the inner scalar depends on.

use std::ops::{Add, Div, Mul, Neg, Sub};

use super::real::Real;
use crate::linalg::Matrix;

#[derive(Clone, Copy, Debug)]
pub struct Dual<R> {
    pub v: R,
    pub d: R,
}

impl<R: Real> Dual<R> {
    pub fn new(v: R, d: R) -> Self {
        Self { v, d }
    }

    pub fn constant(v: R) -> Self {
        Self { v, d: v.lift(0.0) }
    }
}

impl<R: Real> Add for Dual<R> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.v + o.v, self.d + o.d)
    }
}

impl<R: Real> Sub for Dual<R> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.v - o.v, self.d - o.d)
    }
}

impl<R: Real> Mul for Dual<R> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        Self::new(self.v * o.v, self.d * o.v + self.v * o.d)
    }
}

impl<R: Real> Div for Dual<R> {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        let q = self.v / o.v;
        Self::new(q, (self.d - q * o.d) / o.v)
    }
}

impl<R: Real> Neg for Dual<R> {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.v, -self.d)
    }
}

impl<R: Real> Add<f64> for Dual<R> {
    type Output = Self;
    fn add(self, c: f64) -> Self {
        Self::new(self.v + c, self.d)
    }
}

impl<R: Real> Sub<f64> for Dual<R> {
    type Output = Self;
    fn sub(self, c: f64) -> Self {
        Self::new(self.v - c, self.d)
    }
}

impl<R: Real> Mul<f64> for Dual<R> {
    type Output = Self;
    fn mul(self, c: f64) -> Self {
        Self::new(self.v * c, self.d * c)
    }
}

impl<R: Real> Div<f64> for Dual<R> {
    type Output = Self;
    fn div(self, c: f64) -> Self {
        Self::new(self.v / c, self.d / c)
    }
}

impl<R: Real> Real for Dual<R> {
    fn value(self) -> f64 {
        self.v.value()
    }

    fn lift(self, c: f64) -> Self {
        Self::constant(self.v.lift(c))
    }

    fn tanh(self) -> Self {
        let t = self.v.tanh();
        Self::new(t, self.d * (-(t * t) + 1.0))
    }

    fn sqrt(self) -> Self {
        let s = self.v.sqrt();
        Self::new(s, self.d / (s * 2.0))
    }

    fn exp(self) -> Self {
        let e = self.v.exp();
        Self::new(e, self.d * e)
    }

    fn ln(self) -> Self {
        Self::new(self.v.ln(), self.d / self.v)
    }

    fn sin(self) -> Self {
        Self::new(self.v.sin(), self.d * self.v.cos())
    }

    fn cos(self) -> Self {
        Self::new(self.v.cos(), -(self.d * self.v.sin()))
    }

    fn powi(self, n: i32) -> Self {
        if n == 0 {
            return self.lift(1.0);
        }
        let p = self.v.powi(n - 1);
        Self::new(p * self.v, self.d * p * n as f64)
    }
}

/// Value and input Jacobian of a vector field written against [`Real`].
///
/// Column `j` of the Jacobian is obtained by seeding direction `e_j`.
pub fn jacobian<R, F>(f: F, x: &[R]) -> (Vec<R>, Matrix<R>)
where
    R: Real,
    F: Fn(&[Dual<R>]) -> Vec<Dual<R>>,
{
    let n = x.len();
    let zero = x[0].lift(0.0);
    let one = x[0].lift(1.0);
    let mut value = Vec::new();
    let mut jac: Option<Matrix<R>> = None;
    for j in 0..n {
        let seeded: Vec<Dual<R>> = x
            .iter()
            .enumerate()
            .map(|(k, &v)| Dual::new(v, if k == j { one } else { zero }))
            .collect();
        let out = f(&seeded);
        let m = jac.get_or_insert_with(|| Matrix::filled(out.len(), n, zero));
        for (i, o) in out.iter().enumerate() {
            m[(i, j)] = o.d;
        }
        if j == 0 {
            value = out.iter().map(|o| o.v).collect();
        }
    }
    (value, jac.expect("non-empty input"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::tape::Tape;

    #[test]
    fn dual_tanh_derivative() {
        let x = Dual::new(0.4f64, 1.0);
        let y = x.tanh();
        assert!((y.d - (1.0 - 0.4f64.tanh().powi(2))).abs() < 1e-15);
    }

    #[test]
    fn jacobian_of_polynomial_map() {
        let (v, j) = jacobian(
            |x: &[Dual<f64>]| vec![x[0] * x[1], x[0].powi(3) + x[1].sin()],
            &[2.0, 0.5],
        );
        assert_eq!(v[0], 1.0);
        assert!((j[(0, 0)] - 0.5).abs() < 1e-15);
        assert!((j[(0, 1)] - 2.0).abs() < 1e-15);
        assert!((j[(1, 0)] - 12.0).abs() < 1e-15);
        assert!((j[(1, 1)] - 0.5f64.cos()).abs() < 1e-15);
    }

    #[test]
    fn dual_over_tape_is_differentiable() {
        // J = w (1 - t²) with t = tanh(w x); dJ/dw = (1 - t²) - 2 w x t (1 - t²)
        let tape = Tape::new();
        let w = tape.var(0.8);
        let x = 0.6;
        let (_, j) = jacobian(
            |v: &[Dual<_>]| vec![(v[0] * Dual::constant(w)).tanh()],
            &[tape.constant(x)],
        );
        let g = tape.grad(j[(0, 0)], &[w]).unwrap()[0];
        let t = (0.8f64 * x).tanh();
        let s = 1.0 - t * t;
        let expected = s + 0.8 * (-2.0 * t * s * x);
        assert!((g - expected).abs() < 1e-12, "{g} vs {expected}");
    }
}
