//! Relative errors of learned fields and log-log convergence fits.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::sde::SdeModel;
use crate::simulate::RngStream;

/// `(Σ ‖c − r‖² / Σ ‖r‖²)^{1/2}` over paired vectors.
pub fn relative_error(candidate: &[Vec<f64>], reference: &[Vec<f64>]) -> Result<f64> {
    if candidate.is_empty() {
        return Err(Error::EmptyInput);
    }
    if candidate.len() != reference.len() {
        return Err(Error::ShapeMismatch {
            expected: reference.len(),
            got: candidate.len(),
        });
    }
    let (mut num, mut den) = (0.0, 0.0);
    for (c, r) in candidate.iter().zip(reference) {
        if c.len() != r.len() {
            return Err(Error::ShapeMismatch {
                expected: r.len(),
                got: c.len(),
            });
        }
        for (a, b) in c.iter().zip(r) {
            num += (a - b) * (a - b);
            den += b * b;
        }
    }
    if den == 0.0 {
        return Err(Error::ZeroReference);
    }
    Ok((num / den).sqrt())
}

/// Scalar fields, e.g. potentials.
pub fn relative_error_scalar(candidate: &[f64], reference: &[f64]) -> Result<f64> {
    let wrap = |v: &[f64]| v.iter().map(|&x| vec![x]).collect::<Vec<_>>();
    relative_error(&wrap(candidate), &wrap(reference))
}

/// Matrix fields under the Frobenius norm.
pub fn relative_error_matrices(
    candidate: &[Matrix<f64>],
    reference: &[Matrix<f64>],
) -> Result<f64> {
    let flat = |v: &[Matrix<f64>]| v.iter().map(|m| m.as_slice().to_vec()).collect::<Vec<_>>();
    relative_error(&flat(candidate), &flat(reference))
}

/// Least-squares slope of `log e` against `log h`.
pub fn order_fit(hs: &[f64], errors: &[f64]) -> Result<f64> {
    if hs.len() != errors.len() {
        return Err(Error::ShapeMismatch {
            expected: hs.len(),
            got: errors.len(),
        });
    }
    if hs.len() < 3 {
        return Err(Error::InvalidArgument(
            "order fit needs at least 3 points".into(),
        ));
    }
    if hs.iter().chain(errors).any(|&v| !(v > 0.0)) {
        return Err(Error::NonPositiveInput);
    }
    let x: Vec<f64> = hs.iter().map(|h| h.ln()).collect();
    let y: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::DegenerateGrid("all step sizes equal".into()));
    }
    Ok(sxy / sxx)
}

/// Uniform points on a box.
pub fn sample_box(domain: &[(f64, f64)], n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = RngStream::new(seed);
    (0..n)
        .map(|_| {
            domain
                .iter()
                .map(|&(lo, hi)| rng.random_range(lo..=hi))
                .collect()
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub e_f: f64,
    pub e_sigma: f64,
    /// Potential error, when a potential was fitted.
    #[serde(default)]
    pub e_v: Option<f64>,
    /// Invariant-density error, when one was estimated.
    #[serde(default)]
    pub e_p: Option<f64>,
    pub n_points: usize,
    pub seed: u64,
}

/// `e_f` and `e_σ` of `learned` against `truth` on `points`.
pub fn drift_diffusion_errors(
    learned: &dyn SdeModel<f64>,
    truth: &dyn SdeModel<f64>,
    points: &[Vec<f64>],
) -> Result<(f64, f64)> {
    let mut fl = Vec::with_capacity(points.len());
    let mut ft = Vec::with_capacity(points.len());
    let mut sl = Vec::with_capacity(points.len());
    let mut st = Vec::with_capacity(points.len());
    for x in points {
        fl.push(learned.drift(x)?);
        ft.push(truth.drift(x)?);
        sl.push(learned.diffusion(x)?);
        st.push(truth.diffusion(x)?);
    }
    Ok((
        relative_error(&fl, &ft)?,
        relative_error_matrices(&sl, &st)?,
    ))
}

impl Metrics {
    pub fn evaluate(
        learned: &dyn SdeModel<f64>,
        truth: &dyn SdeModel<f64>,
        domain: &[(f64, f64)],
        n_points: usize,
        seed: u64,
    ) -> Result<Self> {
        let pts = sample_box(domain, n_points, seed);
        let (e_f, e_sigma) = drift_diffusion_errors(learned, truth, &pts)?;
        Ok(Self {
            e_f,
            e_sigma,
            e_v: None,
            e_p: None,
            n_points,
            seed,
        })
    }

    pub fn to_csv(&self) -> String {
        use crate::simulate::fmt_real;
        let mut s = format!(
            "metric,value\ne_f,{}\ne_sigma,{}\n",
            fmt_real(self.e_f),
            fmt_real(self.e_sigma)
        );
        if let Some(v) = self.e_v {
            s.push_str(&format!("e_v,{}\n", fmt_real(v)));
        }
        if let Some(p) = self.e_p {
            s.push_str(&format!("e_p,{}\n", fmt_real(p)));
        }
        s.push_str(&format!("n_points,{}\nseed,{}\n", self.n_points, self.seed));
        s
    }
}
