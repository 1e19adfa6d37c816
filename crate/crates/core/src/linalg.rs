//! Small dense linear algebra over any [`Real`] scalar.
//!
//! Sizes are tiny (D ≤ 16), so everything is plain row-major storage with
//! straight loops. Factorizations are written scalar by scalar, which makes
//! them differentiable when the scalar is a tape variable.

use std::ops::{Index, IndexMut};

use crate::autodiff::Real;
use crate::error::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<R> {
    rows: usize,
    cols: usize,
    data: Vec<R>,
}

impl<R: Copy> Matrix<R> {
    pub fn filled(rows: usize, cols: usize, v: R) -> Self {
        Self {
            rows,
            cols,
            data: vec![v; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<R>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix storage length");
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[R] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[R] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn map<S: Copy>(&self, f: impl Fn(R) -> S) -> Matrix<S> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn transpose(&self) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for j in 0..self.cols {
            for i in 0..self.rows {
                data.push(self[(i, j)]);
            }
        }
        Self {
            rows: self.cols,
            cols: self.rows,
            data,
        }
    }
}

impl Matrix<f64> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, 0.0)
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |x| x.len());
        let data = rows
            .iter()
            .flat_map(|row| {
                assert_eq!(row.len(), c, "ragged rows");
                row.iter().copied()
            })
            .collect();
        Self::from_vec(r, c, data)
    }

    pub fn diag(d: &[f64]) -> Self {
        let mut m = Self::zeros(d.len(), d.len());
        for (i, &v) in d.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

impl<R: Real> Matrix<R> {
    /// Lifts a constant matrix next to `like`.
    pub fn lift_from(like: R, m: &Matrix<f64>) -> Self {
        m.map(|v| like.lift(v))
    }

    pub fn identity_like(like: R, n: usize) -> Self {
        let mut m = Self::filled(n, n, like.lift(0.0));
        for i in 0..n {
            m[(i, i)] = like.lift(1.0);
        }
        m
    }

    pub fn values(&self) -> Matrix<f64> {
        self.map(|x| x.value())
    }

    pub fn matmul(&self, rhs: &Self) -> Self {
        assert_eq!(self.cols, rhs.rows, "matmul shape");
        let mut data = Vec::with_capacity(self.rows * rhs.cols);
        let mut col = Vec::with_capacity(rhs.rows);
        let zero = self.data[0].lift(0.0);
        for i in 0..self.rows {
            for j in 0..rhs.cols {
                col.clear();
                col.extend((0..rhs.rows).map(|k| rhs[(k, j)]));
                data.push(R::dot_add(self.row(i), &col, zero));
            }
        }
        Self::from_vec(self.rows, rhs.cols, data)
    }

    /// `self · selfᵀ`.
    pub fn gram(&self) -> Self {
        let zero = self.data[0].lift(0.0);
        let n = self.rows;
        let mut out = Self::filled(n, n, zero);
        for i in 0..n {
            for j in 0..=i {
                let v = R::dot_add(self.row(i), self.row(j), zero);
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
        }
        out
    }

    pub fn matvec(&self, x: &[R]) -> Vec<R> {
        assert_eq!(self.cols, x.len(), "matvec shape");
        let zero = x[0].lift(0.0);
        (0..self.rows)
            .map(|i| R::dot_add(self.row(i), x, zero))
            .collect()
    }

    pub fn add(&self, rhs: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        Self::from_vec(
            self.rows,
            self.cols,
            self.data
                .iter()
                .zip(&rhs.data)
                .map(|(&a, &b)| a + b)
                .collect(),
        )
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map(|x| x * c)
    }

    pub fn scale_by(&self, c: R) -> Self {
        self.map(|x| x * c)
    }

    /// `(M + Mᵀ) / 2`.
    pub fn symmetrize(&self) -> Self {
        assert!(self.is_square());
        let mut out = self.clone();
        for i in 0..self.rows {
            for j in 0..i {
                let v = (self[(i, j)] + self[(j, i)]) * 0.5;
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
        }
        out
    }

    pub fn trace(&self) -> R {
        let mut t = self[(0, 0)];
        for i in 1..self.rows {
            t = t + self[(i, i)];
        }
        t
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|x| x.value() == 0.0)
    }
}

impl<R> Index<(usize, usize)> for Matrix<R> {
    type Output = R;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &R {
        &self.data[i * self.cols + j]
    }
}

impl<R> IndexMut<(usize, usize)> for Matrix<R> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut R {
        &mut self.data[i * self.cols + j]
    }
}

/// Lower-triangular square matrix; entries above the diagonal are zero.
#[derive(Clone, Debug, PartialEq)]
pub struct LowerTriangular<R>(Matrix<R>);

impl<R: Real> LowerTriangular<R> {
    /// Takes the lower triangle of `m`, zeroing everything above the diagonal.
    pub fn from_lower(m: Matrix<R>) -> Self {
        assert!(m.is_square());
        let mut m = m;
        let zero = m.data[0].lift(0.0);
        for i in 0..m.rows {
            for j in i + 1..m.cols {
                m[(i, j)] = zero;
            }
        }
        Self(m)
    }

    pub fn dim(&self) -> usize {
        self.0.rows
    }

    pub fn matrix(&self) -> &Matrix<R> {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix<R> {
        self.0
    }

    pub fn diag(&self, i: usize) -> R {
        self.0[(i, i)]
    }

    /// `L · x`, skipping the structural zeros.
    pub fn mul_vec(&self, x: &[R]) -> Vec<R> {
        (0..self.dim())
            .map(|i| R::dot_add(&self.0.row(i)[..=i], &x[..=i], x[0].lift(0.0)))
            .collect()
    }

    /// `L · Lᵀ`.
    pub fn reconstruct(&self) -> Matrix<R> {
        self.0.gram()
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn scale(&self, c: R) -> Self {
        Self(self.0.scale_by(c))
    }
}

impl<R> Index<(usize, usize)> for LowerTriangular<R> {
    type Output = R;
    fn index(&self, idx: (usize, usize)) -> &R {
        &self.0[idx]
    }
}

fn try_cholesky<R: Real>(
    a: &Matrix<R>,
    jitter: f64,
) -> std::result::Result<Matrix<R>, (usize, f64)> {
    let n = a.rows();
    let zero = a[(0, 0)].lift(0.0);
    let mut l = Matrix::filled(n, n, zero);
    for j in 0..n {
        let mut d = a[(j, j)] + jitter;
        for k in 0..j {
            d = d - l[(j, k)].square();
        }
        if !(d.value() > 0.0) {
            return Err((j, d.value()));
        }
        let ljj = d.sqrt();
        l[(j, j)] = ljj;
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s = s - l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    Ok(l)
}

/// Cholesky factor together with whether the diagonal jitter was needed.
pub fn cholesky_report<R: Real>(m: &Matrix<R>) -> Result<(LowerTriangular<R>, bool)> {
    if !m.is_square() {
        return Err(Error::ShapeMismatch {
            expected: m.rows(),
            got: m.cols(),
        });
    }
    let a = m.symmetrize();
    if a.is_zero() {
        return Ok((LowerTriangular(a), false));
    }
    match try_cholesky(&a, 0.0) {
        Ok(l) => Ok((LowerTriangular(l), false)),
        Err(_) => {
            let n = a.rows() as f64;
            let jitter = 1e-10 * (a.trace().value() / n).max(1.0);
            try_cholesky(&a, jitter)
                .map(|l| (LowerTriangular(l), true))
                .map_err(|(row, pivot)| Error::NonPositiveDefinite { row, pivot })
        }
    }
}

/// Lower Cholesky factor of the symmetrized input.
///
/// An exactly zero matrix yields a zero factor. A failed pivot triggers one
/// retry with `1e-10 · max(1, trace/D)` added to the diagonal.
pub fn cholesky<R: Real>(m: &Matrix<R>) -> Result<LowerTriangular<R>> {
    cholesky_report(m).map(|(l, _)| l)
}

/// Forward substitution `L y = b`.
pub fn solve_lower<R: Real>(l: &LowerTriangular<R>, b: &[R]) -> Result<Vec<R>> {
    let n = l.dim();
    if b.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: b.len(),
        });
    }
    let mut y: Vec<R> = Vec::with_capacity(n);
    for i in 0..n {
        let lii = l[(i, i)];
        if !(lii.value() > 0.0) {
            return Err(Error::Degenerate { row: i });
        }
        let s = if i == 0 {
            b[0]
        } else {
            b[i] - R::dot_add(&l.matrix().row(i)[..i], &y, b[0].lift(0.0))
        };
        y.push(s / lii);
    }
    Ok(y)
}

/// Log-density of `N(mean, chol·cholᵀ)` at `x`.
pub fn gaussian_logpdf<R: Real>(x: &[R], mean: &[R], chol: &LowerTriangular<R>) -> Result<R> {
    let d = chol.dim();
    if x.len() != d || mean.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: x.len().min(mean.len()),
        });
    }
    let diff: Vec<R> = x.iter().zip(mean).map(|(&a, &b)| a - b).collect();
    let z = solve_lower(chol, &diff)?;
    let mut acc = z[0].square() * -0.5 - 0.5 * d as f64 * LN_2PI;
    for zi in &z[1..] {
        acc = acc - zi.square() * 0.5;
    }
    for i in 0..d {
        acc = acc - chol.diag(i).ln();
    }
    Ok(acc)
}

/// `log Σ exp(tᵢ)`, shifted by the largest term.
pub fn logsumexp<R: Real>(terms: &[R]) -> Result<R> {
    let (&first, rest) = terms.split_first().ok_or(Error::EmptyInput)?;
    if rest.is_empty() {
        return Ok(first);
    }
    let m = terms
        .iter()
        .copied()
        .fold(first, |a, b| if b.value() > a.value() { b } else { a });
    let mut s = (first - m).exp();
    for &t in rest {
        s = s + (t - m).exp();
    }
    Ok(m + s.ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + b.abs())
    }

    #[test]
    fn cholesky_identity_and_zero() {
        let l = cholesky(&Matrix::identity(3)).unwrap();
        assert_eq!(l.matrix(), &Matrix::identity(3));
        let z = cholesky(&Matrix::zeros(2, 2)).unwrap();
        assert!(z.is_zero());
    }

    #[test]
    fn cholesky_two_by_two() {
        let m = Matrix::from_rows(&[&[4.0, 2.0], &[2.0, 5.0]]);
        let l = cholesky(&m).unwrap();
        assert_eq!(l.matrix(), &Matrix::from_rows(&[&[2.0, 0.0], &[1.0, 2.0]]));
        // L·Lᵀ by explicit multiplication
        let r = l.matrix().matmul(&l.matrix().transpose());
        assert_eq!(r, m);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let m = Matrix::from_rows(&[&[1.0, 2.0], &[2.0, 1.0]]);
        assert!(matches!(
            cholesky(&m),
            Err(Error::NonPositiveDefinite { row: 1, .. })
        ));
    }

    #[test]
    fn cholesky_jitters_singular_psd() {
        let m = Matrix::from_rows(&[&[1.0, 1.0], &[1.0, 1.0]]);
        let (l, jittered) = cholesky_report(&m).unwrap();
        assert!(jittered);
        let r = l.reconstruct();
        let err = (0..4)
            .map(|k| (r.as_slice()[k] - m.as_slice()[k]).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!(err / m.frobenius() < 1e-9);
    }

    #[test]
    fn cholesky_symmetrizes_input() {
        let m = Matrix::from_rows(&[&[4.0, 2.0 + 1e-12], &[2.0 - 1e-12, 5.0]]);
        let l = cholesky(&m).unwrap();
        assert!(close(l[(1, 0)], 1.0, 1e-12));
    }

    #[test]
    fn solve_lower_cases() {
        let l = cholesky(&Matrix::from_rows(&[&[4.0, 2.0], &[2.0, 5.0]])).unwrap();
        assert_eq!(solve_lower(&l, &[2.0, 3.0]).unwrap(), vec![1.0, 1.0]);
        let id = LowerTriangular::from_lower(Matrix::identity(3));
        assert_eq!(
            solve_lower(&id, &[1.0, -2.0, 3.0]).unwrap(),
            vec![1.0, -2.0, 3.0]
        );
        let diag = LowerTriangular::from_lower(Matrix::diag(&[2.0, 4.0]));
        assert_eq!(solve_lower(&diag, &[1.0, 1.0]).unwrap(), vec![0.5, 0.25]);
        let bad = LowerTriangular::from_lower(Matrix::diag(&[1.0, 0.0]));
        assert!(matches!(
            solve_lower(&bad, &[1.0, 1.0]),
            Err(Error::Degenerate { row: 1 })
        ));
    }

    #[test]
    fn logpdf_standard_normal_mode() {
        let id = LowerTriangular::from_lower(Matrix::identity(1));
        let v = gaussian_logpdf(&[0.0], &[0.0], &id).unwrap();
        assert!(close(v, -0.918_938_533_204_672_7, 1e-15));
    }

    #[test]
    fn logpdf_at_mean_is_normalizer() {
        let l = LowerTriangular::from_lower(Matrix::from_rows(&[&[2.0, 0.0], &[1.0, 3.0]]));
        let v = gaussian_logpdf(&[0.5, 0.5], &[0.5, 0.5], &l).unwrap();
        assert!(close(v, -LN_2PI - 6.0f64.ln(), 1e-14));
    }

    #[test]
    fn logpdf_matches_explicit_inverse() {
        // Σ = L Lᵀ = [[4,2],[2,5]], det 16, Σ⁻¹ = [[5,-2],[-2,4]]/16
        let l = cholesky(&Matrix::from_rows(&[&[4.0, 2.0], &[2.0, 5.0]])).unwrap();
        let v = gaussian_logpdf(&[1.0, 1.0], &[0.0, 0.0], &l).unwrap();
        let quad = (5.0 - 2.0 - 2.0 + 4.0) / 16.0;
        let expected = -(2.0 * std::f64::consts::PI).ln() - 0.5 * 16.0f64.ln() - 0.5 * quad;
        assert!(close(v, expected, 1e-14), "{v} vs {expected}");
    }

    #[test]
    fn logpdf_rejects_degenerate() {
        let l = LowerTriangular::from_lower(Matrix::zeros(1, 1));
        assert!(gaussian_logpdf(&[0.0], &[0.0], &l).is_err());
    }

    #[test]
    fn logpdf_integrates_to_one() {
        let s = 0.7;
        let l = LowerTriangular::from_lower(Matrix::diag(&[s]));
        let mean = 0.3;
        let n = 4000;
        let (a, b) = (mean - 8.0 * s, mean + 8.0 * s);
        let dx = (b - a) / n as f64;
        let mut total = 0.0;
        for i in 0..=n {
            let x = a + i as f64 * dx;
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            total += w * gaussian_logpdf(&[x], &[mean], &l).unwrap().exp();
        }
        assert!((total * dx - 1.0).abs() < 1e-6);
    }

    #[test]
    fn logsumexp_cases() {
        assert_eq!(logsumexp(&[0.0]).unwrap(), 0.0);
        assert!(logsumexp(&[0.5f64.ln(), 0.5f64.ln()]).unwrap().abs() < 1e-15);
        // shifted exponentials: -1000 + ln(1 + e^-0.5)
        let v = logsumexp(&[-1000.0, -1000.5]).unwrap();
        assert!(close(v, -1000.0 + (1.0 + (-0.5f64).exp()).ln(), 1e-15));
        assert!(close(v, -999.526, 1e-6));
        assert!(matches!(logsumexp::<f64>(&[]), Err(Error::EmptyInput)));
    }

    proptest! {
        #[test]
        fn cholesky_recovers_factor(
            diag in proptest::collection::vec(0.1f64..10.0, 4),
            off in proptest::collection::vec(-5.0f64..5.0, 6),
        ) {
            let n = 4;
            let mut l = Matrix::zeros(n, n);
            let mut k = 0;
            for i in 0..n {
                l[(i, i)] = diag[i];
                for j in 0..i {
                    l[(i, j)] = off[k];
                    k += 1;
                }
            }
            let m = LowerTriangular::from_lower(l.clone()).reconstruct();
            let got = cholesky(&m).unwrap();
            for i in 0..n {
                for j in 0..n {
                    prop_assert!((got[(i, j)] - l[(i, j)]).abs() <= 1e-9 * (1.0 + l[(i, j)].abs()));
                }
            }
        }

        #[test]
        fn logsumexp_is_shift_invariant_and_finite(
            t in proptest::collection::vec(-1e6f64..1e6, 1..8),
            c in -1e3f64..1e3,
        ) {
            let base = logsumexp(&t).unwrap();
            prop_assert!(base.is_finite());
            let shifted: Vec<f64> = t.iter().map(|x| x + c).collect();
            let s = logsumexp(&shifted).unwrap();
            prop_assert!((s - (base + c)).abs() <= 1e-9 * (1.0 + base.abs()));
        }
    }
}
