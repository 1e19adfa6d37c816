//! SDE models `dy = f(y) dt + σ(y) dω`: the learnable parameterization and
//! closed-form benchmark systems.

mod benchmarks;

pub use benchmarks::{benes_exact_density, ou_exact_transition, Benchmark, LinearSde};

use rand::Rng;

use crate::autodiff::{Layout, Mlp, MlpSpec, ParameterVector, Real};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Anything the density approximations can step through.
///
/// Implemented by benchmarks for every scalar type and by [`BoundSde`] for
/// the scalar type of its parameter slice.
pub trait SdeModel<R: Real> {
    fn dim(&self) -> usize;

    fn drift(&self, x: &[R]) -> Result<Vec<R>>;

    fn drift_and_jacobian(&self, x: &[R]) -> Result<(Vec<R>, Matrix<R>)>;

    /// `D × D` noise coupling matrix at `x`.
    fn diffusion(&self, x: &[R]) -> Result<Matrix<R>>;

    /// True when `diffusion` is lower triangular with positive diagonal
    /// everywhere, so it can stand in for a covariance factor directly.
    fn triangular_diffusion(&self) -> bool;
}

/// Maps an unconstrained scalar to `(√(s²+1) + s) / 2 > 0`.
pub fn positive_map<R: Real>(s: R) -> R {
    ((s * s + 1.0).sqrt() + s) * 0.5
}

/// Inverse of [`positive_map`] on `(0, ∞)`.
pub fn positive_map_inv(d: f64) -> f64 {
    d - 1.0 / (4.0 * d)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Deserialize, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DiffusionKind {
    ConstantFull,
    ConstantTriangular,
    StateDependent,
}

#[derive(Clone, Debug, PartialEq)]
pub enum DiffusionModel {
    /// Plain `D × D` block, row-major.
    ConstantFull { offset: usize },
    /// `D(D−1)/2` strictly-lower entries (row-major) then `D` raw diagonal values.
    ConstantTriangular { offset: usize },
    /// σ₁ with `D²` outputs (entry `(i, j)` from output `D·i + j`, kept for `i > j`)
    /// and σ₂ with `D` raw diagonal outputs.
    StateDependent { lower: Mlp, diag: Mlp },
}

impl DiffusionModel {
    pub fn kind(&self) -> DiffusionKind {
        match self {
            Self::ConstantFull { .. } => DiffusionKind::ConstantFull,
            Self::ConstantTriangular { .. } => DiffusionKind::ConstantTriangular,
            Self::StateDependent { .. } => DiffusionKind::StateDependent,
        }
    }
}

/// Initial noise level for constant diffusion blocks.
pub const INITIAL_NOISE: f64 = 0.1;

/// Neural drift plus one of the diffusion parameterizations, laid out in a
/// single flat parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterizedSde {
    dim: usize,
    pub drift: Mlp,
    pub diffusion: DiffusionModel,
    layout: Layout,
}

impl ParameterizedSde {
    /// `diffusion_hidden` is only used by [`DiffusionKind::StateDependent`].
    pub fn new(
        dim: usize,
        drift_hidden: &[usize],
        kind: DiffusionKind,
        diffusion_hidden: &[usize],
    ) -> Self {
        let mut layout = Layout::new();
        let drift = Mlp::register(&mut layout, "drift", MlpSpec::new(dim, drift_hidden, dim));
        let diffusion = match kind {
            DiffusionKind::ConstantFull => DiffusionModel::ConstantFull {
                offset: layout.push("sigma.full", dim, dim),
            },
            DiffusionKind::ConstantTriangular => {
                let offset = layout.push("sigma.lower", dim * (dim - 1) / 2, 1);
                layout.push("sigma.diag", dim, 1);
                DiffusionModel::ConstantTriangular { offset }
            }
            DiffusionKind::StateDependent => DiffusionModel::StateDependent {
                lower: Mlp::register(
                    &mut layout,
                    "sigma1",
                    MlpSpec::new(dim, diffusion_hidden, dim * dim),
                ),
                diag: Mlp::register(
                    &mut layout,
                    "sigma2",
                    MlpSpec::new(dim, diffusion_hidden, dim),
                ),
            },
        };
        Self {
            dim,
            drift,
            diffusion,
            layout,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn n_params(&self) -> usize {
        self.layout.len()
    }

    /// Glorot drift; diffusion starting at `INITIAL_NOISE · I`.
    pub fn init<G: Rng + ?Sized>(&self, rng: &mut G) -> ParameterVector {
        let mut p = ParameterVector::zeros(self.layout.clone());
        let v = &mut p.values;
        self.drift.init_glorot(v, rng);
        let d = self.dim;
        match &self.diffusion {
            DiffusionModel::ConstantFull { offset } => {
                for i in 0..d {
                    v[offset + i * d + i] = INITIAL_NOISE;
                }
            }
            DiffusionModel::ConstantTriangular { offset } => {
                let diag = offset + d * (d - 1) / 2;
                v[diag..diag + d].fill(positive_map_inv(INITIAL_NOISE));
            }
            DiffusionModel::StateDependent { lower, diag } => {
                lower.init_glorot(v, rng);
                diag.init_glorot(v, rng);
                let end = diag.param_range().end;
                v[end - d..end].fill(positive_map_inv(INITIAL_NOISE));
            }
        }
        p
    }

    /// Attaches a parameter slice (plain values or tape variables).
    pub fn bind<'a, R: Real>(&'a self, params: &'a [R]) -> BoundSde<'a, R> {
        assert_eq!(params.len(), self.n_params(), "parameter length");
        BoundSde {
            model: self,
            params,
        }
    }

    /// σ(x) for the given parameters.
    pub fn sigma_eval<R: Real>(&self, params: &[R], x: &[R]) -> Result<Matrix<R>> {
        let d = self.dim;
        if x.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: x.len(),
            });
        }
        let zero = params[0].lift(0.0);
        match &self.diffusion {
            DiffusionModel::ConstantFull { offset } => Ok(Matrix::from_vec(
                d,
                d,
                params[*offset..offset + d * d].to_vec(),
            )),
            DiffusionModel::ConstantTriangular { offset } => {
                let mut m = Matrix::filled(d, d, zero);
                let mut at = *offset;
                for i in 0..d {
                    for j in 0..i {
                        m[(i, j)] = params[at];
                        at += 1;
                    }
                }
                for i in 0..d {
                    m[(i, i)] = positive_map(params[at + i]);
                }
                Ok(m)
            }
            DiffusionModel::StateDependent { lower, diag } => {
                let s1 = lower.forward(params, x)?;
                let s2 = diag.forward(params, x)?;
                let mut m = Matrix::filled(d, d, zero);
                for i in 0..d {
                    for j in 0..i {
                        m[(i, j)] = s1[d * i + j];
                    }
                    m[(i, i)] = positive_map(s2[i]);
                }
                Ok(m)
            }
        }
    }
}

/// A [`ParameterizedSde`] with a concrete parameter slice.
#[derive(Clone, Copy, Debug)]
pub struct BoundSde<'a, R> {
    pub model: &'a ParameterizedSde,
    pub params: &'a [R],
}

impl<R: Real> SdeModel<R> for BoundSde<'_, R> {
    fn dim(&self) -> usize {
        self.model.dim
    }

    fn drift(&self, x: &[R]) -> Result<Vec<R>> {
        self.model.drift.forward(self.params, x)
    }

    fn drift_and_jacobian(&self, x: &[R]) -> Result<(Vec<R>, Matrix<R>)> {
        self.model.drift.forward_jacobian(self.params, x)
    }

    fn diffusion(&self, x: &[R]) -> Result<Matrix<R>> {
        self.model.sigma_eval(self.params, x)
    }

    fn triangular_diffusion(&self) -> bool {
        self.model.diffusion.kind() != DiffusionKind::ConstantFull
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::cholesky_report;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn positive_map_examples() {
        assert_eq!(positive_map(0.0), 0.5);
        assert_eq!(positive_map(0.75), 1.0);
        assert!((positive_map(positive_map_inv(0.1)) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn zero_nets_give_half_identity() {
        let m = ParameterizedSde::new(3, &[4], DiffusionKind::StateDependent, &[5]);
        let p = vec![0.0; m.n_params()];
        let s = m.sigma_eval(&p, &[0.3, -1.0, 2.0]).unwrap();
        assert_eq!(s, Matrix::identity(3).scale(0.5));
    }

    #[test]
    fn lower_net_rearrangement_order() {
        let m = ParameterizedSde::new(2, &[], DiffusionKind::StateDependent, &[]);
        let DiffusionModel::StateDependent { lower, .. } = &m.diffusion else {
            unreachable!()
        };
        let mut p = vec![0.0; m.n_params()];
        // output biases of σ₁ are indices D·i + j
        let bias = lower.param_range().end - 4;
        p[bias..bias + 4].copy_from_slice(&[10.0, 11.0, 12.0, 13.0]);
        let s = m.sigma_eval(&p, &[0.0, 0.0]).unwrap();
        assert_eq!(s[(1, 0)], 12.0);
        assert_eq!(s[(0, 1)], 0.0);
        assert_eq!(s[(0, 0)], 0.5);
    }

    #[test]
    fn constant_kinds_start_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for kind in [
            DiffusionKind::ConstantFull,
            DiffusionKind::ConstantTriangular,
            DiffusionKind::StateDependent,
        ] {
            let m = ParameterizedSde::new(2, &[8], kind, &[]);
            let p = m.init(&mut rng);
            let s = m.sigma_eval(&p.values, &[0.0, 0.0]).unwrap();
            assert!(
                (s[(0, 0)] - 0.1).abs() < 1e-12 && (s[(1, 1)] - 0.1).abs() < 1e-12,
                "{kind:?}"
            );
        }
    }

    #[test]
    fn dimension_mismatch() {
        let m = ParameterizedSde::new(2, &[], DiffusionKind::ConstantTriangular, &[]);
        let p = vec![0.0; m.n_params()];
        assert!(matches!(
            m.sigma_eval(&p, &[1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn triangular_kinds_have_positive_diagonal_and_factor_cleanly(
            seed in any::<u64>(),
            x in proptest::collection::vec(-5.0f64..5.0, 3),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for kind in [DiffusionKind::ConstantTriangular, DiffusionKind::StateDependent] {
                let m = ParameterizedSde::new(3, &[4], kind, &[6]);
                let p: Vec<f64> = (0..m.n_params()).map(|_| rng.random_range(-3.0..3.0)).collect();
                let s = m.sigma_eval(&p, &x).unwrap();
                for i in 0..3 {
                    prop_assert!(s[(i, i)] > 0.0);
                    for j in i + 1..3 {
                        prop_assert_eq!(s[(i, j)], 0.0);
                    }
                }
                let (_, jittered) = cholesky_report(&s.gram()).unwrap();
                prop_assert!(!jittered);
            }
        }
    }
}
