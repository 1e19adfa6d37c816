//! Wengert tape for reverse-mode differentiation.
//!
//! Every recorded scalar is a node holding its value and a list of
//! `(parent, local partial)` pairs. Constants are never recorded; a `Var`
//! with the sentinel index carries its value only. Fused n-ary nodes
//! (`dot_add`, `lin_comb`) keep network layers to one node per output.

use std::cell::RefCell;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use super::real::Real;
use crate::error::{Error, Result};

const CONST: u32 = u32::MAX;

#[derive(Default)]
struct Inner {
    vals: Vec<f64>,
    ends: Vec<u32>,
    /// `(parent, local partial)`; node `i` owns `edges[ends[i−1]..ends[i]]`.
    edges: Vec<(u32, f64)>,
}

impl Inner {
    #[inline]
    fn push_node(&mut self, val: f64) -> u32 {
        let idx = self.vals.len() as u32;
        self.vals.push(val);
        self.ends.push(self.edges.len() as u32);
        idx
    }

    #[inline]
    fn push_edge(&mut self, parent: u32, partial: f64) {
        if parent != CONST && partial != 0.0 {
            self.edges.push((parent, partial));
        }
    }

    #[inline]
    fn seal(&mut self) {
        *self.ends.last_mut().expect("sealed node") = self.edges.len() as u32;
    }
}

/// Append-only operation record. One tape per evaluation thread.
#[derive(Default)]
pub struct Tape {
    inner: RefCell<Inner>,
}

/// A scalar that is either recorded on a tape or a tape-context constant.
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    idx: u32,
    val: f64,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.idx == CONST {
            write!(f, "Const({})", self.val)
        } else {
            write!(f, "Var#{}({})", self.idx, self.val)
        }
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        self.inner.borrow().vals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Drops every recorded node, keeping allocations.
    pub fn clear(&mut self) {
        let inner = self.inner.get_mut();
        inner.vals.clear();
        inner.ends.clear();
        inner.edges.clear();
    }

    /// Records an independent variable.
    pub fn var(&self, val: f64) -> Var<'_> {
        let idx = self.inner.borrow_mut().push_node(val);
        Var {
            tape: self,
            idx,
            val,
        }
    }

    /// Records one independent variable per entry of `vals`.
    pub fn leaves(&self, vals: &[f64]) -> Vec<Var<'_>> {
        let mut inner = self.inner.borrow_mut();
        vals.iter()
            .map(|&val| {
                let idx = inner.push_node(val);
                Var {
                    tape: self,
                    idx,
                    val,
                }
            })
            .collect()
    }

    /// A constant in this tape's context; nothing is recorded.
    pub fn constant(&self, val: f64) -> Var<'_> {
        Var {
            tape: self,
            idx: CONST,
            val,
        }
    }

    /// Adjoints of every node with respect to `output`.
    pub fn adjoints(&self, output: Var<'_>) -> Result<Vec<f64>> {
        if !std::ptr::eq(output.tape, self) {
            return Err(Error::NotOnTape);
        }
        let inner = self.inner.borrow();
        let n = inner.vals.len();
        let mut adj = vec![0.0; n];
        if output.idx == CONST {
            return Ok(adj);
        }
        let out = output.idx as usize;
        if out >= n {
            return Err(Error::NotOnTape);
        }
        adj[out] = 1.0;
        let ends = &inner.ends[..=out];
        for i in (0..=out).rev() {
            let a = adj[i];
            if a == 0.0 {
                continue;
            }
            let start = if i == 0 { 0 } else { ends[i - 1] as usize };
            for &(p, d) in &inner.edges[start..ends[i] as usize] {
                adj[p as usize] += a * d;
            }
        }
        Ok(adj)
    }

    /// Gradient of `output` with respect to the given independent variables.
    pub fn grad(&self, output: Var<'_>, wrt: &[Var<'_>]) -> Result<Vec<f64>> {
        let adj = self.adjoints(output)?;
        wrt.iter()
            .map(|v| {
                if !std::ptr::eq(v.tape, self) {
                    Err(Error::NotOnTape)
                } else if v.idx == CONST {
                    Ok(0.0)
                } else {
                    adj.get(v.idx as usize).copied().ok_or(Error::NotOnTape)
                }
            })
            .collect()
    }

    #[inline]
    fn unary(&self, a: Var<'_>, val: f64, da: f64) -> Var<'_> {
        if a.idx == CONST {
            return Var {
                tape: self,
                idx: CONST,
                val,
            };
        }
        let mut inner = self.inner.borrow_mut();
        let idx = inner.push_node(val);
        inner.push_edge(a.idx, da);
        inner.seal();
        Var {
            tape: self,
            idx,
            val,
        }
    }

    #[inline]
    fn binary(&self, a: Var<'_>, b: Var<'_>, val: f64, da: f64, db: f64) -> Var<'_> {
        if a.idx == CONST && b.idx == CONST {
            return Var {
                tape: self,
                idx: CONST,
                val,
            };
        }
        let mut inner = self.inner.borrow_mut();
        let idx = inner.push_node(val);
        inner.push_edge(a.idx, da);
        inner.push_edge(b.idx, db);
        inner.seal();
        Var {
            tape: self,
            idx,
            val,
        }
    }
}

impl<'t> Var<'t> {
    /// Whether this value is a recorded node rather than a constant.
    pub fn is_recorded(&self) -> bool {
        self.idx != CONST
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }
}

impl<'t> Add for Var<'t> {
    type Output = Var<'t>;
    #[inline]
    fn add(self, rhs: Self) -> Self {
        self.tape.binary(self, rhs, self.val + rhs.val, 1.0, 1.0)
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Var<'t>;
    #[inline]
    fn sub(self, rhs: Self) -> Self {
        self.tape.binary(self, rhs, self.val - rhs.val, 1.0, -1.0)
    }
}

impl<'t> Mul for Var<'t> {
    type Output = Var<'t>;
    #[inline]
    fn mul(self, rhs: Self) -> Self {
        self.tape
            .binary(self, rhs, self.val * rhs.val, rhs.val, self.val)
    }
}

impl<'t> Div for Var<'t> {
    type Output = Var<'t>;
    #[inline]
    fn div(self, rhs: Self) -> Self {
        let q = self.val / rhs.val;
        self.tape.binary(self, rhs, q, 1.0 / rhs.val, -q / rhs.val)
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Var<'t>;
    #[inline]
    fn neg(self) -> Self {
        self.tape.unary(self, -self.val, -1.0)
    }
}

impl<'t> Add<f64> for Var<'t> {
    type Output = Var<'t>;
    #[inline]
    fn add(self, rhs: f64) -> Self {
        self.tape.unary(self, self.val + rhs, 1.0)
    }
}

impl<'t> Sub<f64> for Var<'t> {
    type Output = Var<'t>;
    #[inline]
    fn sub(self, rhs: f64) -> Self {
        self.tape.unary(self, self.val - rhs, 1.0)
    }
}

impl<'t> Mul<f64> for Var<'t> {
    type Output = Var<'t>;
    #[inline]
    fn mul(self, rhs: f64) -> Self {
        self.tape.unary(self, self.val * rhs, rhs)
    }
}

impl<'t> Div<f64> for Var<'t> {
    type Output = Var<'t>;
    #[inline]
    fn div(self, rhs: f64) -> Self {
        self.tape.unary(self, self.val / rhs, 1.0 / rhs)
    }
}

impl<'t> Add<Var<'t>> for f64 {
    type Output = Var<'t>;
    fn add(self, rhs: Var<'t>) -> Var<'t> {
        rhs + self
    }
}

impl<'t> Sub<Var<'t>> for f64 {
    type Output = Var<'t>;
    fn sub(self, rhs: Var<'t>) -> Var<'t> {
        rhs.tape.unary(rhs, self - rhs.val, -1.0)
    }
}

impl<'t> Mul<Var<'t>> for f64 {
    type Output = Var<'t>;
    fn mul(self, rhs: Var<'t>) -> Var<'t> {
        rhs * self
    }
}

impl<'t> Real for Var<'t> {
    #[inline]
    fn value(self) -> f64 {
        self.val
    }

    #[inline]
    fn lift(self, c: f64) -> Self {
        self.tape.constant(c)
    }

    fn tanh(self) -> Self {
        let t = self.val.tanh();
        self.tape.unary(self, t, 1.0 - t * t)
    }

    fn sqrt(self) -> Self {
        let s = self.val.sqrt();
        self.tape.unary(self, s, 0.5 / s)
    }

    fn exp(self) -> Self {
        let e = self.val.exp();
        self.tape.unary(self, e, e)
    }

    fn ln(self) -> Self {
        self.tape.unary(self, self.val.ln(), 1.0 / self.val)
    }

    fn sin(self) -> Self {
        self.tape.unary(self, self.val.sin(), self.val.cos())
    }

    fn cos(self) -> Self {
        self.tape.unary(self, self.val.cos(), -self.val.sin())
    }

    fn powi(self, n: i32) -> Self {
        let val = self.val.powi(n);
        let d = if n == 0 {
            0.0
        } else {
            n as f64 * self.val.powi(n - 1)
        };
        self.tape.unary(self, val, d)
    }

    fn one_minus_square(self) -> Self {
        self.tape
            .unary(self, 1.0 - self.val * self.val, -2.0 * self.val)
    }

    fn dot_add(w: &[Self], x: &[Self], bias: Self) -> Self {
        debug_assert_eq!(w.len(), x.len());
        let tape = bias.tape;
        let mut val = bias.val;
        for (a, b) in w.iter().zip(x) {
            val += a.val * b.val;
        }
        let recorded = bias.idx != CONST
            || w.iter().any(|v| v.idx != CONST)
            || x.iter().any(|v| v.idx != CONST);
        if !recorded {
            return tape.constant(val);
        }
        let mut inner = tape.inner.borrow_mut();
        let idx = inner.push_node(val);
        let edges = &mut inner.edges;
        edges.reserve(2 * w.len() + 1);
        let base = edges.len();
        let spare = &mut edges.spare_capacity_mut()[..2 * w.len() + 1];
        let mut k = 0;
        let mut put = |p: u32, d: f64| {
            if p != CONST && d != 0.0 {
                spare[k].write((p, d));
                k += 1;
            }
        };
        put(bias.idx, 1.0);
        for (a, b) in w.iter().zip(x) {
            put(a.idx, b.val);
            put(b.idx, a.val);
        }
        // SAFETY: the first `k` spare slots were initialized just above.
        unsafe { edges.set_len(base + k) };
        inner.seal();
        Var { tape, idx, val }
    }

    fn lin_comb(coeffs: &[f64], x: &[Self]) -> Self {
        debug_assert_eq!(coeffs.len(), x.len());
        let tape = x[0].tape;
        let val = coeffs.iter().zip(x).map(|(c, v)| c * v.val).sum();
        if x.iter().all(|v| v.idx == CONST) {
            return tape.constant(val);
        }
        let mut inner = tape.inner.borrow_mut();
        inner.edges.reserve(x.len());
        let idx = inner.push_node(val);
        for (c, v) in coeffs.iter().zip(x) {
            inner.push_edge(v.idx, *c);
        }
        inner.seal();
        Var { tape, idx, val }
    }
}
