use serde::{Deserialize, Serialize};

use super::SdeModel;
use crate::autodiff::{jacobian, Real};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Closed-form ground-truth systems.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "tag", rename_all = "snake_case", deny_unknown_fields)]
pub enum Benchmark {
    /// `dx = tanh x dt + noise dω`.
    Benes {
        #[serde(default = "default_benes_noise")]
        noise: f64,
    },
    /// `dx = −a x dt + s dω`.
    OrnsteinUhlenbeck {
        a: f64,
        s: f64,
    },
    TwoDim {},
    /// Multiplicative-noise Lorenz, drift `(−σx − σy, −xz + rx − y, xy − bz)`.
    Lorenz {
        #[serde(default = "default_lorenz_sigma")]
        sigma: f64,
        #[serde(default = "default_lorenz_r")]
        r: f64,
        #[serde(default = "default_lorenz_b")]
        b: f64,
        #[serde(default = "default_lorenz_eps")]
        eps: f64,
    },
    /// Ten-gene EMT-metastasis network with `0.2 I` noise.
    Emt {},
    /// Mean-field SIR(S) on concentrations `(y1, y2)` with chemical Langevin noise.
    SirMeanField {
        k1: f64,
        k2: f64,
        k3: f64,
        n: f64,
    },
    /// Gradient system `f = −U'`, `U = (x² − 1)²`, constant noise.
    DoubleWell {
        #[serde(default = "default_double_well_noise")]
        noise: f64,
    },
}

fn default_benes_noise() -> f64 {
    0.3
}
fn default_lorenz_sigma() -> f64 {
    10.0
}
fn default_lorenz_r() -> f64 {
    28.0
}
fn default_lorenz_b() -> f64 {
    8.0 / 3.0
}
fn default_lorenz_eps() -> f64 {
    0.3
}
fn default_double_well_noise() -> f64 {
    1.0
}

impl Benchmark {
    /// Default-parameter instance for a tag name.
    pub fn from_tag(tag: &str) -> Result<Self> {
        Ok(match tag {
            "benes" => Self::Benes {
                noise: default_benes_noise(),
            },
            "ornstein_uhlenbeck" | "ou" => Self::OrnsteinUhlenbeck { a: 1.0, s: 0.5 },
            "two_dim" => Self::TwoDim {},
            "lorenz" => Self::Lorenz {
                sigma: default_lorenz_sigma(),
                r: default_lorenz_r(),
                b: default_lorenz_b(),
                eps: default_lorenz_eps(),
            },
            "emt" => Self::Emt {},
            "sir" | "sir_mean_field" => Self::SirMeanField {
                k1: 1.0,
                k2: 1.0,
                k3: 0.0,
                n: 1024.0,
            },
            "sirs" => Self::SirMeanField {
                k1: 1.0,
                k2: 1.0,
                k3: 0.5,
                n: 1024.0,
            },
            "double_well" => Self::DoubleWell {
                noise: default_double_well_noise(),
            },
            other => return Err(Error::UnknownTag(other.to_string())),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Benes { .. } => "benes",
            Self::OrnsteinUhlenbeck { .. } => "ornstein_uhlenbeck",
            Self::TwoDim {} => "two_dim",
            Self::Lorenz { .. } => "lorenz",
            Self::Emt {} => "emt",
            Self::SirMeanField { .. } => "sir_mean_field",
            Self::DoubleWell { .. } => "double_well",
        }
    }

    pub fn dimension(&self) -> usize {
        match self {
            Self::Benes { .. } | Self::OrnsteinUhlenbeck { .. } | Self::DoubleWell { .. } => 1,
            Self::TwoDim {} | Self::SirMeanField { .. } => 2,
            Self::Lorenz { .. } => 3,
            Self::Emt {} => 10,
        }
    }

    /// Sampling box, one `(lo, hi)` per coordinate.
    pub fn domain_box(&self) -> Vec<(f64, f64)> {
        match self {
            Self::Benes { .. } => vec![(-1.0, 1.0)],
            Self::OrnsteinUhlenbeck { .. } => vec![(-2.0, 2.0)],
            Self::DoubleWell { .. } => vec![(-1.5, 1.5)],
            Self::TwoDim {} => vec![(-2.0, 2.0), (-3.0, 3.0)],
            Self::Lorenz { .. } => vec![(-25.0, 25.0), (-30.0, 30.0), (-10.0, 60.0)],
            Self::Emt {} => (0..10)
                .map(|i| if i == 6 { (0.0, 6.0) } else { (0.0, 2.0) })
                .collect(),
            Self::SirMeanField { .. } => vec![(0.0, 1.0), (0.0, 1.0)],
        }
    }

    pub fn drift_generic<S: Real>(&self, x: &[S]) -> Vec<S> {
        let c = |v: f64| x[0].lift(v);
        match *self {
            Self::Benes { .. } => vec![x[0].tanh()],
            Self::OrnsteinUhlenbeck { a, .. } => vec![x[0] * -a],
            Self::DoubleWell { .. } => vec![x[0] * (x[0] * x[0] - 1.0) * -4.0],
            Self::TwoDim {} => {
                let (u, v) = (x[0], x[1]);
                let cubic = u * (-(u * u) + 1.0);
                let s = u.sin() + 1.0;
                vec![cubic * 0.2 + v * s, -v + cubic * s * 2.0]
            }
            Self::Lorenz { sigma, r, b, .. } => {
                let (u, v, w) = (x[0], x[1], x[2]);
                vec![u * -sigma - v * sigma, -(u * w) + u * r - v, u * v - w * b]
            }
            Self::Emt {} => emt_drift(x),
            Self::SirMeanField { k1, k2, k3, .. } => {
                let (y1, y2) = (x[0], x[1]);
                let y0 = c(1.0) - y1 - y2;
                vec![y0 * y1 * (4.0 * k1) - y1 * k2, y1 * k2 - y2 * k3]
            }
        }
    }

    pub fn diffusion_generic<S: Real>(&self, x: &[S]) -> Matrix<S> {
        let zero = x[0].lift(0.0);
        let diag = |d: Vec<S>| {
            let mut m = Matrix::filled(d.len(), d.len(), zero);
            for (i, v) in d.into_iter().enumerate() {
                m[(i, i)] = v;
            }
            m
        };
        let c = |v: f64| x[0].lift(v);
        match *self {
            Self::Benes { noise } | Self::DoubleWell { noise } => diag(vec![c(noise)]),
            Self::OrnsteinUhlenbeck { s, .. } => diag(vec![c(s)]),
            Self::TwoDim {} => diag(vec![c((1.0f64 / 50.0).sqrt()), c((1.0f64 / 5.0).sqrt())]),
            Self::Lorenz { eps, .. } => diag(x.iter().map(|&v| v * eps).collect()),
            Self::Emt {} => diag(vec![c(0.2); 10]),
            Self::SirMeanField { k1, k2, k3, n } => {
                // Cholesky factor of (1/N)[[r1 + r2, −r2], [−r2, r2 + r3]]
                let (y1, y2) = (x[0], x[1]);
                let y0 = c(1.0) - y1 - y2;
                let pos = |v: S| if v.value() > 0.0 { v } else { zero };
                let r1 = pos(y0 * y1 * (4.0 * k1));
                let r2 = pos(y1 * k2);
                let r3 = pos(y2 * k3);
                let c11 = (r1 + r2) / n;
                let c12 = -r2 / n;
                let c22 = (r2 + r3) / n;
                let mut m = Matrix::filled(2, 2, zero);
                if c11.value() > 0.0 {
                    let l11 = c11.sqrt();
                    let l21 = c12 / l11;
                    let rest = c22 - l21 * l21;
                    m[(0, 0)] = l11;
                    m[(1, 0)] = l21;
                    m[(1, 1)] = if rest.value() > 0.0 {
                        rest.sqrt()
                    } else {
                        zero
                    };
                } else if c22.value() > 0.0 {
                    m[(1, 1)] = c22.sqrt();
                }
                m
            }
        }
    }

    /// `(drift, diffusion)` at a plain point.
    pub fn eval(&self, x: &[f64]) -> Result<(Vec<f64>, Matrix<f64>)> {
        self.check_dim(x.len())?;
        Ok((self.drift_generic(x), self.diffusion_generic(x)))
    }

    fn check_dim(&self, got: usize) -> Result<()> {
        if got != self.dimension() {
            return Err(Error::DimensionMismatch {
                expected: self.dimension(),
                got,
            });
        }
        Ok(())
    }

    /// Noise is constant in the state.
    pub fn constant_diffusion(&self) -> bool {
        !matches!(self, Self::Lorenz { .. } | Self::SirMeanField { .. })
    }
}

fn emt_drift<S: Real>(y: &[S]) -> Vec<S> {
    // act: yⁿ/(0.5ⁿ + yⁿ), rep: 0.5ⁿ/(0.5ⁿ + yⁿ)
    let act = |v: S, n: i32| {
        let p = v.powi(n);
        p / (p + 0.5f64.powi(n))
    };
    let rep = |v: S, n: i32| {
        let k = 0.5f64.powi(n);
        (v.powi(n) + k).recip() * k
    };
    let y = |i: usize| y[i - 1];
    vec![
        (rep(y(1), 1) + rep(y(5), 2) + rep(y(7), 4)) * 0.8 - y(1),
        (act(y(1), 1) + act(y(2), 2)) * 0.2 + (rep(y(4), 6) + rep(y(6), 4)) * 0.8 - y(2),
        (act(y(3), 2) + act(y(9), 4)) * 0.2 + rep(y(6), 4) * 0.8 - y(3),
        act(y(3), 4) * 0.2 + (rep(y(1), 1) + rep(y(2), 3)) * 0.8 - y(4),
        (rep(y(1), 1) + rep(y(2), 2)) * 0.8 - y(5),
        (rep(y(2), 4) + rep(y(3), 4)) * 0.8 - y(6),
        act(y(7), 2) * 0.8 + act(y(8), 5) * 7.0 + rep(y(9), 4) * 0.8 - y(7) * y(10) * 4.0 - y(7),
        (rep(y(1), 4) + rep(y(10), 1)) * 0.8 - y(8),
        act(y(9), 2) * 0.2 + rep(y(7), 4) * 0.8 - y(9),
        (y(10).powi(3) + 1.0).recip() * 4.0 + 0.1 - y(7) * y(10) * 4.0 - y(10),
    ]
}

impl<R: Real> SdeModel<R> for Benchmark {
    fn dim(&self) -> usize {
        self.dimension()
    }

    fn drift(&self, x: &[R]) -> Result<Vec<R>> {
        self.check_dim(x.len())?;
        Ok(self.drift_generic(x))
    }

    fn drift_and_jacobian(&self, x: &[R]) -> Result<(Vec<R>, Matrix<R>)> {
        self.check_dim(x.len())?;
        Ok(jacobian(|d| self.drift_generic(d), x))
    }

    fn diffusion(&self, x: &[R]) -> Result<Matrix<R>> {
        self.check_dim(x.len())?;
        Ok(self.diffusion_generic(x))
    }

    fn triangular_diffusion(&self) -> bool {
        self.constant_diffusion()
    }
}

/// `dx = A x dt + B dω` with constant matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearSde {
    pub a: Matrix<f64>,
    pub b: Matrix<f64>,
}

impl<R: Real> SdeModel<R> for LinearSde {
    fn dim(&self) -> usize {
        self.a.rows()
    }

    fn drift(&self, x: &[R]) -> Result<Vec<R>> {
        Ok(self.drift_and_jacobian(x)?.0)
    }

    fn drift_and_jacobian(&self, x: &[R]) -> Result<(Vec<R>, Matrix<R>)> {
        if x.len() != self.a.cols() {
            return Err(Error::DimensionMismatch {
                expected: self.a.cols(),
                got: x.len(),
            });
        }
        let f = (0..self.a.rows())
            .map(|i| R::lin_comb(self.a.row(i), x))
            .collect();
        Ok((f, Matrix::lift_from(x[0], &self.a)))
    }

    fn diffusion(&self, x: &[R]) -> Result<Matrix<R>> {
        Ok(Matrix::lift_from(x[0], &self.b))
    }

    fn triangular_diffusion(&self) -> bool {
        let n = self.b.rows();
        (0..n).all(|i| self.b[(i, i)] > 0.0 && (i + 1..n).all(|j| self.b[(i, j)] == 0.0))
    }
}

/// Exact transition density of `dx = tanh x dt + dω`.
pub fn benes_exact_density(t: f64, x: f64, x0: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::NonpositiveTime(t));
    }
    let d = x - x0;
    Ok((2.0 * std::f64::consts::PI * t).sqrt().recip()
        * (x.cosh() / x0.cosh())
        * (-0.5 * t).exp()
        * (-d * d / (2.0 * t)).exp())
}

/// Exact `(mean, variance)` after time `h` for `dx = −a x dt + s dω` from `z`.
pub fn ou_exact_transition(a: f64, s: f64, z: f64, h: f64) -> (f64, f64) {
    assert!(
        a > 0.0 && s > 0.0 && h > 0.0,
        "OU parameters must be positive"
    );
    (
        z * (-a * h).exp(),
        s * s * (1.0 - (-2.0 * a * h).exp()) / (2.0 * a),
    )
}
