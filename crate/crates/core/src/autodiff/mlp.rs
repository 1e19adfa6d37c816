//! Fully-connected tanh networks evaluated against any [`Real`].
//!
//! A network occupies a contiguous range of the flat parameter vector:
//! for each layer a row-major `out × in` weight block followed by the bias.
//! The last layer is affine; every hidden layer applies tanh.

use rand::Rng;

use super::params::Layout;
use super::real::Real;
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Shape of a network.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub output_dim: usize,
}

impl MlpSpec {
    pub fn new(input_dim: usize, hidden: &[usize], output_dim: usize) -> Self {
        assert!(input_dim >= 1 && output_dim >= 1, "widths must be positive");
        assert!(hidden.iter().all(|&w| w >= 1), "widths must be positive");
        Self {
            input_dim,
            hidden: hidden.to_vec(),
            output_dim,
        }
    }

    /// `(out, in)` per layer.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut dims = vec![self.input_dim];
        dims.extend(&self.hidden);
        dims.push(self.output_dim);
        dims.windows(2).map(|w| (w[1], w[0])).collect()
    }

    pub fn n_params(&self) -> usize {
        self.layer_shapes().iter().map(|(o, i)| o * i + o).sum()
    }
}

/// A network placed at a fixed offset inside a parameter vector.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mlp {
    pub spec: MlpSpec,
    pub offset: usize,
}

impl Mlp {
    /// Registers `prefix.{layer}.weight` / `prefix.{layer}.bias` blocks.
    pub fn register(layout: &mut Layout, prefix: &str, spec: MlpSpec) -> Self {
        let offset = layout.len();
        for (s, (o, i)) in spec.layer_shapes().into_iter().enumerate() {
            layout.push(format!("{prefix}.{s}.weight"), o, i);
            layout.push(format!("{prefix}.{s}.bias"), o, 1);
        }
        Self { spec, offset }
    }

    pub fn param_range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.spec.n_params()
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init_glorot<G: Rng + ?Sized>(&self, params: &mut [f64], rng: &mut G) {
        let mut at = self.offset;
        for (o, i) in self.spec.layer_shapes() {
            let bound = (6.0 / (i + o) as f64).sqrt();
            for w in &mut params[at..at + o * i] {
                *w = rng.random_range(-bound..=bound);
            }
            at += o * i;
            params[at..at + o].fill(0.0);
            at += o;
        }
    }

    fn check_input<R>(&self, params: &[R], x: &[R]) -> Result<()> {
        if x.len() != self.spec.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.spec.input_dim,
                got: x.len(),
            });
        }
        if params.len() < self.offset + self.spec.n_params() {
            return Err(Error::ShapeMismatch {
                expected: self.offset + self.spec.n_params(),
                got: params.len(),
            });
        }
        Ok(())
    }

    pub fn forward<R: Real>(&self, params: &[R], x: &[R]) -> Result<Vec<R>> {
        self.check_input(params, x)?;
        let shapes = self.spec.layer_shapes();
        let last = shapes.len() - 1;
        let mut at = self.offset;
        let mut a = x.to_vec();
        for (s, (o, i)) in shapes.into_iter().enumerate() {
            let w = &params[at..at + o * i];
            let b = &params[at + o * i..at + o * i + o];
            at += o * i + o;
            let z: Vec<R> = (0..o)
                .map(|r| R::dot_add(&w[r * i..(r + 1) * i], &a, b[r]))
                .collect();
            a = if s == last {
                z
            } else {
                z.into_iter().map(Real::tanh).collect()
            };
        }
        Ok(a)
    }

    /// Output and `output_dim × input_dim` input Jacobian.
    ///
    /// One tangent column per input direction is pushed through the layers
    /// alongside the primal pass, so every Jacobian entry is itself a scalar
    /// of type `R` (and stays differentiable when `R` is a tape variable).
    pub fn forward_jacobian<R: Real>(&self, params: &[R], x: &[R]) -> Result<(Vec<R>, Matrix<R>)> {
        self.check_input(params, x)?;
        let n_dir = self.spec.input_dim;
        let shapes = self.spec.layer_shapes();
        let last = shapes.len() - 1;
        let zero = x[0].lift(0.0);
        let mut at = self.offset;
        let mut a = x.to_vec();
        // tangents[k][r]: derivative of unit r w.r.t. input k
        let mut tangents: Vec<Vec<R>> = Vec::new();
        for (s, (o, i)) in shapes.into_iter().enumerate() {
            let w = &params[at..at + o * i];
            let b = &params[at + o * i..at + o * i + o];
            at += o * i + o;
            let z: Vec<R> = (0..o)
                .map(|r| R::dot_add(&w[r * i..(r + 1) * i], &a, b[r]))
                .collect();
            let dz: Vec<Vec<R>> = if s == 0 {
                (0..n_dir)
                    .map(|k| (0..o).map(|r| w[r * i + k]).collect())
                    .collect()
            } else {
                tangents
                    .iter()
                    .map(|t| {
                        (0..o)
                            .map(|r| R::dot_add(&w[r * i..(r + 1) * i], t, zero))
                            .collect()
                    })
                    .collect()
            };
            if s == last {
                a = z;
                tangents = dz;
            } else {
                a = z.into_iter().map(Real::tanh).collect();
                let slope: Vec<R> = a.iter().map(|v| v.one_minus_square()).collect();
                tangents = dz
                    .into_iter()
                    .map(|t| t.into_iter().zip(&slope).map(|(d, &g)| d * g).collect())
                    .collect();
            }
        }
        let out_dim = a.len();
        let mut jac = Matrix::filled(out_dim, n_dir, zero);
        for (k, t) in tangents.iter().enumerate() {
            for (r, &v) in t.iter().enumerate() {
                jac[(r, k)] = v;
            }
        }
        Ok((a, jac))
    }

    pub fn input_jacobian<R: Real>(&self, params: &[R], x: &[R]) -> Result<Matrix<R>> {
        if self.spec.output_dim != self.spec.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.spec.input_dim,
                got: self.spec.output_dim,
            });
        }
        self.forward_jacobian(params, x).map(|(_, j)| j)
    }

    /// Value and input gradient of a scalar-output network.
    pub fn value_and_input_gradient<R: Real>(&self, params: &[R], x: &[R]) -> Result<(R, Vec<R>)> {
        if self.spec.output_dim != 1 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                got: self.spec.output_dim,
            });
        }
        let (v, j) = self.forward_jacobian(params, x)?;
        Ok((v[0], j.row(0).to_vec()))
    }

    /// Value and divergence (trace of the input Jacobian) of a square network.
    pub fn value_and_divergence<R: Real>(&self, params: &[R], x: &[R]) -> Result<(Vec<R>, R)> {
        if self.spec.output_dim != self.spec.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.spec.input_dim,
                got: self.spec.output_dim,
            });
        }
        let (v, j) = self.forward_jacobian(params, x)?;
        Ok((v, j.trace()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tape;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_net(spec: MlpSpec, seed: u64) -> (Mlp, Vec<f64>) {
        let mut layout = Layout::new();
        let net = Mlp::register(&mut layout, "f", spec);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = vec![0.0; layout.len()];
        net.init_glorot(&mut p, &mut rng);
        // non-zero biases so every path is exercised
        for v in p.iter_mut() {
            if *v == 0.0 {
                *v = rng.random_range(-0.5..0.5);
            }
        }
        (net, p)
    }

    /// Straight-line evaluation of tanh(W1 x + b1) → W2 h + b2 for a 1-16-1 net.
    fn reference_1_16_1(p: &[f64], x: f64) -> f64 {
        let (w1, b1, w2, b2) = (&p[0..16], &p[16..32], &p[32..48], p[48]);
        let mut out = b2;
        for k in 0..16 {
            out += w2[k] * (w1[k] * x + b1[k]).tanh();
        }
        out
    }

    #[test]
    fn identity_affine_net() {
        let mut layout = Layout::new();
        let net = Mlp::register(&mut layout, "f", MlpSpec::new(3, &[], 3));
        let mut p = vec![0.0; layout.len()];
        for i in 0..3 {
            p[i * 3 + i] = 1.0;
        }
        assert_eq!(
            net.forward(&p, &[0.1, -2.0, 3.5]).unwrap(),
            vec![0.1, -2.0, 3.5]
        );
    }

    #[test]
    fn zero_weights_give_output_bias() {
        let mut layout = Layout::new();
        let net = Mlp::register(&mut layout, "f", MlpSpec::new(2, &[1], 2));
        let mut p = vec![0.0; layout.len()];
        let out_bias = layout.get("f.1.bias").unwrap().range();
        p[out_bias.start] = 0.25;
        p[out_bias.start + 1] = -4.0;
        assert_eq!(net.forward(&p, &[9.0, 9.0]).unwrap(), vec![0.25, -4.0]);
    }

    #[test]
    fn matches_straight_line_reference() {
        let (net, p) = random_net(MlpSpec::new(1, &[16], 1), 7);
        assert_eq!(net.spec.n_params(), 49);
        let got = net.forward(&p, &[0.3]).unwrap()[0];
        assert!((got - reference_1_16_1(&p, 0.3)).abs() < 1e-14);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let (net, p) = random_net(MlpSpec::new(2, &[4], 2), 1);
        assert!(matches!(
            net.forward(&p, &[1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
        let (scalar, q) = random_net(MlpSpec::new(2, &[4], 1), 1);
        assert!(scalar.input_jacobian(&q, &[1.0, 2.0]).is_err());
        assert!(net.value_and_input_gradient(&p, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn linear_net_jacobian_is_its_matrix() {
        for d in 1..=10 {
            let (net, p) = random_net(MlpSpec::new(d, &[], d), d as u64);
            let x: Vec<f64> = (0..d).map(|k| 0.1 * k as f64).collect();
            let j = net.input_jacobian(&p, &x).unwrap();
            assert_eq!(j.as_slice(), &p[..d * d]);
        }
    }

    #[test]
    fn one_dim_tanh_jacobian_closed_form() {
        let mut layout = Layout::new();
        let net = Mlp::register(&mut layout, "f", MlpSpec::new(1, &[1], 1));
        // tanh(w x + b) through an identity output layer
        let (w, b) = (1.7, -0.2);
        let p = vec![w, b, 1.0, 0.0];
        let x = 0.45;
        let j = net.input_jacobian(&p, &[x]).unwrap()[(0, 0)];
        let t = (w * x + b).tanh();
        assert!((j - w * (1.0 - t * t)).abs() < 1e-15);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let (net, p) = random_net(MlpSpec::new(3, &[8, 8], 3), 11);
        let x = [0.2, -0.4, 0.9];
        let j = net.input_jacobian(&p, &x).unwrap();
        let eps = 1e-6;
        for k in 0..3 {
            let mut xp = x;
            let mut xm = x;
            xp[k] += eps;
            xm[k] -= eps;
            let fp = net.forward(&p, &xp).unwrap();
            let fm = net.forward(&p, &xm).unwrap();
            for r in 0..3 {
                let fd = (fp[r] - fm[r]) / (2.0 * eps);
                assert!((fd - j[(r, k)]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn constant_net_has_zero_gradient_and_divergence() {
        let mut layout = Layout::new();
        let v = Mlp::register(&mut layout, "v", MlpSpec::new(2, &[4], 1));
        let g = Mlp::register(&mut layout, "g", MlpSpec::new(2, &[4], 2));
        let mut p = vec![0.0; layout.len()];
        p[v.param_range().end - 1] = 3.0;
        let (val, grad) = v.value_and_input_gradient(&p, &[0.5, 0.5]).unwrap();
        assert_eq!(val, 3.0);
        assert_eq!(grad, vec![0.0, 0.0]);
        let (_, div) = g.value_and_divergence(&p, &[0.5, 0.5]).unwrap();
        assert_eq!(div, 0.0);
    }

    #[test]
    fn parameter_gradient_through_jacobian() {
        let (net, p) = random_net(MlpSpec::new(2, &[5], 2), 3);
        let x = [0.3, -0.7];
        let loss = |params: &[f64]| {
            let (f, j) = net.forward_jacobian(params, &x).unwrap();
            f[0] * j[(1, 0)] + j[(0, 1)].powi(2) + j.trace()
        };
        let tape = Tape::new();
        let theta = tape.leaves(&p);
        let xs: Vec<_> = x.iter().map(|&v| tape.constant(v)).collect();
        let (f, j) = net.forward_jacobian(&theta, &xs).unwrap();
        let out = f[0] * j[(1, 0)] + j[(0, 1)].powi(2) + j.trace();
        let g = tape.grad(out, &theta).unwrap();
        let eps = 1e-5;
        for k in 0..p.len() {
            let mut pp = p.clone();
            let mut pm = p.clone();
            pp[k] += eps;
            pm[k] -= eps;
            let fd = (loss(&pp) - loss(&pm)) / (2.0 * eps);
            assert!(
                (fd - g[k]).abs() <= 1e-5 * g[k].abs().max(1e-3),
                "coord {k}: {fd} vs {}",
                g[k]
            );
        }
    }
}
