//! Transition-density approximations: single Gaussian steps, the DynGMA
//! mixture recursion, the moment-ODE cubature baseline and mixture
//! log-densities.

use serde::{Deserialize, Serialize};

use crate::autodiff::Real;
use crate::error::{Error, Result};
use crate::linalg::{cholesky, gaussian_logpdf, logsumexp, LowerTriangular, Matrix};
use crate::sde::SdeModel;

/// Component cap used when none is configured.
pub const DEFAULT_COMPONENT_CAP: usize = 100_000;

/// Symmetric `2D + 1` point rule matching the first two Gaussian moments.
#[derive(Clone, Debug, PartialEq)]
pub struct CubatureRule {
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl CubatureRule {
    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// `ξ₀ = 0`, `ξ = ±√(D+1) e_j`, weights `1/(D+1)` and `1/(2(D+1))`.
pub fn make_cubature(d: usize) -> CubatureRule {
    assert!(d >= 1, "cubature dimension must be positive");
    let c = ((d + 1) as f64).sqrt();
    let mut points = vec![vec![0.0; d]];
    for sign in [1.0, -1.0] {
        for j in 0..d {
            let mut p = vec![0.0; d];
            p[j] = sign * c;
            points.push(p);
        }
    }
    let mut weights = vec![1.0 / (d + 1) as f64];
    weights.extend(std::iter::repeat_n(1.0 / (2 * (d + 1)) as f64, 2 * d));
    CubatureRule { points, weights }
}

/// Per-sub-step Gaussian approximation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// `N(z + h f(z), h σσᵀ(z))`.
    EulerMaruyama,
    /// Midpoint mean and linearized covariance over `L` inner steps.
    Asymptotic,
    /// One midpoint stage; `√h σ` at the midpoint is the factor itself.
    CholFree,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepConfig {
    pub dt: f64,
    pub k: usize,
    pub l: usize,
    pub scheme: Scheme,
}

impl StepConfig {
    pub fn new(dt: f64, k: usize, l: usize, scheme: Scheme) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::NonpositiveTime(dt));
        }
        if k == 0 || l == 0 {
            return Err(Error::InvalidArgument("K and L must be at least 1".into()));
        }
        Ok(Self { dt, k, l, scheme })
    }

    /// `K = ⌈Δt / h_target⌉`, `L = max(1, round(h / inner_step))` with `h = Δt / K`.
    pub fn from_targets(dt: f64, h_target: f64, inner_step: f64, scheme: Scheme) -> Result<Self> {
        if !(h_target > 0.0 && inner_step > 0.0) {
            return Err(Error::InvalidArgument(
                "step targets must be positive".into(),
            ));
        }
        let k = ceil_tolerant(dt / h_target).max(1);
        let h = dt / k as f64;
        let l = ((h / inner_step).round() as usize).max(1);
        Self::new(dt, k, l, scheme)
    }

    pub fn h(&self) -> f64 {
        self.dt / self.k as f64
    }

    /// Same sub-step targets stretched over `dt`.
    pub fn with_dt(&self, dt: f64, h_target: f64) -> Result<Self> {
        Self::new(dt, ceil_tolerant(dt / h_target).max(1), self.l, self.scheme)
    }
}

/// Ceiling that ignores representation noise such as `0.2 / 0.1 = 2.0000000000000004`.
pub(crate) fn ceil_tolerant(x: f64) -> usize {
    let r = x.round();
    if (x - r).abs() < 1e-9 * r.abs().max(1.0) {
        r as usize
    } else {
        x.ceil() as usize
    }
}

fn check_h(h: f64) -> Result<()> {
    if h > 0.0 {
        Ok(())
    } else {
        Err(Error::NonpositiveTime(h))
    }
}

fn axpy<R: Real>(x: &[R], a: f64, y: &[R]) -> Vec<R> {
    x.iter().zip(y).map(|(&x, &y)| x + y * a).collect()
}

/// Euler-Maruyama Gaussian: `(z + h f(z), h σσᵀ(z))`.
pub fn gauss_step_em<R: Real, M: SdeModel<R> + ?Sized>(
    sde: &M,
    z: &[R],
    h: f64,
) -> Result<(Vec<R>, Matrix<R>)> {
    check_h(h)?;
    let f = sde.drift(z)?;
    let s = sde.diffusion(z)?;
    Ok((axpy(z, h, &f), s.scale(h.sqrt()).gram()))
}

/// Midpoint mean and `I + (h/L) J` propagated covariance, `L` inner steps.
pub fn gauss_step_asymptotic<R: Real, M: SdeModel<R> + ?Sized>(
    sde: &M,
    z: &[R],
    h: f64,
    l: usize,
) -> Result<(Vec<R>, Matrix<R>)> {
    check_h(h)?;
    if l == 0 {
        return Err(Error::InvalidArgument("L must be at least 1".into()));
    }
    let d = z.len();
    let dt = h / l as f64;
    let mut mu = z.to_vec();
    let mut cov: Option<Matrix<R>> = None;
    for _ in 0..l {
        let f0 = sde.drift(&mu)?;
        let mid = axpy(&mu, 0.5 * dt, &f0);
        let (fm, j) = sde.drift_and_jacobian(&mid)?;
        let s = sde.diffusion(&mid)?;
        let eye = Matrix::identity_like(z[0], d);
        let half = eye.add(&j.scale(0.5 * dt));
        let noise = half.matmul(&s).gram().scale(dt);
        cov = Some(match cov {
            None => noise,
            Some(c) => {
                let a = eye.add(&j.scale(dt));
                a.matmul(&c).matmul(&a.transpose()).add(&noise)
            }
        });
        mu = axpy(&mu, dt, &fm);
    }
    Ok((mu, cov.expect("at least one inner step").symmetrize()))
}

/// Two-stage midpoint mean with `√h σ(μ_½)` returned as the covariance factor.
pub fn gauss_step_cholfree<R: Real, M: SdeModel<R> + ?Sized>(
    sde: &M,
    z: &[R],
    h: f64,
) -> Result<(Vec<R>, LowerTriangular<R>)> {
    check_h(h)?;
    if !sde.triangular_diffusion() {
        return Err(Error::KindMismatch(
            "factor-free step needs a triangular diffusion",
        ));
    }
    let f0 = sde.drift(z)?;
    let mid = axpy(z, 0.5 * h, &f0);
    let fm = sde.drift(&mid)?;
    let s = sde.diffusion(&mid)?;
    Ok((
        axpy(z, h, &fm),
        LowerTriangular::from_lower(s.scale(h.sqrt())),
    ))
}

/// One sub-step of the configured scheme, returning a covariance factor.
pub fn gauss_step<R: Real, M: SdeModel<R> + ?Sized>(
    sde: &M,
    z: &[R],
    h: f64,
    l: usize,
    scheme: Scheme,
) -> Result<(Vec<R>, LowerTriangular<R>)> {
    match scheme {
        Scheme::EulerMaruyama if sde.triangular_diffusion() => {
            check_h(h)?;
            let f = sde.drift(z)?;
            let s = sde.diffusion(z)?;
            Ok((
                axpy(z, h, &f),
                LowerTriangular::from_lower(s.scale(h.sqrt())),
            ))
        }
        Scheme::EulerMaruyama => {
            let (m, c) = gauss_step_em(sde, z, h)?;
            Ok((m, cholesky(&c)?))
        }
        Scheme::Asymptotic => {
            let (m, c) = gauss_step_asymptotic(sde, z, h, l)?;
            Ok((m, cholesky(&c)?))
        }
        Scheme::CholFree => gauss_step_cholfree(sde, z, h),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianComponent<R> {
    pub weight: f64,
    pub mean: Vec<R>,
    pub factor: LowerTriangular<R>,
}

impl<R: Real> GaussianComponent<R> {
    /// Unit-weight point mass at `z`.
    pub fn point(z: &[R]) -> Self {
        let zero = z[0].lift(0.0);
        Self {
            weight: 1.0,
            mean: z.to_vec(),
            factor: LowerTriangular::from_lower(Matrix::filled(z.len(), z.len(), zero)),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// `μ + √Σ ξ`.
    pub fn sigma_point(&self, xi: &[f64]) -> Vec<R> {
        let m = self.factor.matrix();
        (0..self.dim())
            .map(|i| self.mean[i] + R::lin_comb(&xi[..=i], &m.row(i)[..=i]))
            .collect()
    }

    pub fn covariance(&self) -> Matrix<R> {
        self.factor.reconstruct()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MixtureDensity<R> {
    pub dim: usize,
    pub components: Vec<GaussianComponent<R>>,
}

impl<R: Real> MixtureDensity<R> {
    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.components.iter().map(|c| c.weight).sum()
    }

    pub fn mean(&self) -> Vec<R> {
        let zero = self.components[0].mean[0].lift(0.0);
        let mut m = vec![zero; self.dim];
        for c in &self.components {
            for (a, &b) in m.iter_mut().zip(&c.mean) {
                *a = *a + b * c.weight;
            }
        }
        m
    }

    pub fn logpdf(&self, x: &[R]) -> Result<R> {
        mixture_logpdf(self, x)
    }
}

/// Gaussian-mixture transition approximation over `cfg.dt` in `cfg.k` sub-steps.
///
/// Every component is pushed through the cubature points of its own
/// Gaussian, each point becoming a new component. A component with an
/// exactly zero factor is expanded through its mean alone.
pub fn dyngma<R: Real, M: SdeModel<R> + ?Sized>(
    sde: &M,
    init: &GaussianComponent<R>,
    cfg: &StepConfig,
    rule: &CubatureRule,
    cap: usize,
) -> Result<MixtureDensity<R>> {
    let d = sde.dim();
    if init.dim() != d || rule.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: if init.dim() != d {
                init.dim()
            } else {
                rule.dim()
            },
        });
    }
    let h = cfg.h();
    let mut comps = vec![init.clone()];
    for _ in 0..cfg.k {
        let point_mass: Vec<bool> = comps.iter().map(|c| c.factor.is_zero()).collect();
        let needed: usize = point_mass
            .iter()
            .map(|&p| if p { 1 } else { rule.len() })
            .sum();
        if needed > cap {
            return Err(Error::ComponentBudgetExceeded { needed, cap });
        }
        let mut next = Vec::with_capacity(needed);
        // index i of the new mixture is j·I_k + (i mod I_k)
        for (j, (xi, &v)) in rule.points.iter().zip(&rule.weights).enumerate() {
            for (c, &pm) in comps.iter().zip(&point_mass) {
                let (x, w) = match (pm, j) {
                    (true, 0) => (c.mean.clone(), c.weight),
                    (true, _) => continue,
                    (false, _) => (c.sigma_point(xi), c.weight * v),
                };
                let (mean, factor) = gauss_step(sde, &x, h, cfg.l, cfg.scheme)?;
                next.push(GaussianComponent {
                    weight: w,
                    mean,
                    factor,
                });
            }
        }
        comps = next;
    }
    Ok(MixtureDensity {
        dim: d,
        components: comps,
    })
}

/// `log Σ wᵢ N(x | μᵢ, Σᵢ)`.
pub fn mixture_logpdf<R: Real>(mix: &MixtureDensity<R>, x: &[R]) -> Result<R> {
    let mut terms = Vec::with_capacity(mix.len());
    for (index, c) in mix.components.iter().enumerate() {
        if (0..c.dim()).any(|i| !(c.factor.diag(i).value() > 0.0)) {
            return Err(Error::DegenerateComponent { index });
        }
        terms.push(gaussian_logpdf(x, &c.mean, &c.factor)? + c.weight.ln());
    }
    logsumexp(&terms)
}

/// Explicit-Euler integration of the cubature moment ODEs over `dt`.
pub fn gaussian_cubature_density<R: Real, M: SdeModel<R> + ?Sized>(
    sde: &M,
    z: &[R],
    dt: f64,
    substep: f64,
    rule: &CubatureRule,
) -> Result<(Vec<R>, Matrix<R>)> {
    check_h(dt)?;
    check_h(substep)?;
    let n = (dt / substep).round();
    if n < 1.0 || (n * substep - dt).abs() > 1e-9 * dt {
        return Err(Error::InvalidArgument(format!(
            "substep {substep} does not divide {dt}"
        )));
    }
    let d = z.len();
    let zero = z[0].lift(0.0);
    let mut comp = GaussianComponent::point(z);
    let mut cov = Matrix::filled(d, d, zero);
    for _ in 0..n as usize {
        let mut dmu = vec![zero; d];
        let mut dcov = Matrix::filled(d, d, zero);
        for (xi, &v) in rule.points.iter().zip(&rule.weights) {
            let x = comp.sigma_point(xi);
            let f = sde.drift(&x)?;
            let s = sde.diffusion(&x)?;
            let dev: Vec<R> = x.iter().zip(&comp.mean).map(|(&a, &b)| a - b).collect();
            let ss = s.gram();
            for r in 0..d {
                dmu[r] = dmu[r] + f[r] * v;
                for c in 0..d {
                    dcov[(r, c)] = dcov[(r, c)] + (f[r] * dev[c] + dev[r] * f[c] + ss[(r, c)]) * v;
                }
            }
        }
        comp.mean = axpy(&comp.mean, substep, &dmu);
        cov = cov.add(&dcov.scale(substep)).symmetrize();
        comp.factor = cholesky(&cov)?;
    }
    Ok((comp.mean, cov))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tape;
    use crate::sde::{
        benes_exact_density, ou_exact_transition, Benchmark, DiffusionKind, LinearSde,
        ParameterizedSde,
    };
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ou(a: f64, s: f64) -> LinearSde {
        LinearSde {
            a: Matrix::diag(&[-a]),
            b: Matrix::diag(&[s]),
        }
    }

    fn brownian(d: usize) -> LinearSde {
        LinearSde {
            a: Matrix::zeros(d, d),
            b: Matrix::identity(d),
        }
    }

    /// RK4 on dΣ/dt = AΣ + ΣAᵀ + BBᵀ from Σ(0) = 0.
    fn lyapunov_reference(a: &Matrix<f64>, b: &Matrix<f64>, t: f64) -> Matrix<f64> {
        let q = b.gram();
        let rhs = |s: &Matrix<f64>| a.matmul(s).add(&s.matmul(&a.transpose())).add(&q);
        let n = 20_000;
        let dt = t / n as f64;
        let mut s = Matrix::zeros(a.rows(), a.rows());
        for _ in 0..n {
            let k1 = rhs(&s);
            let k2 = rhs(&s.add(&k1.scale(dt / 2.0)));
            let k3 = rhs(&s.add(&k2.scale(dt / 2.0)));
            let k4 = rhs(&s.add(&k3.scale(dt)));
            s = s.add(
                &k1.add(&k2.scale(2.0))
                    .add(&k3.scale(2.0))
                    .add(&k4)
                    .scale(dt / 6.0),
            );
        }
        s
    }

    fn max_abs_diff(a: &Matrix<f64>, b: &Matrix<f64>) -> f64 {
        a.as_slice()
            .iter()
            .zip(b.as_slice())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    fn trapezoid(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> f64 {
        let dx = (hi - lo) / n as f64;
        let mut s = 0.5 * (f(lo) + f(hi));
        for i in 1..n {
            s += f(lo + i as f64 * dx);
        }
        s * dx
    }

    #[test]
    fn cubature_d1_values() {
        let r = make_cubature(1);
        assert_eq!(
            r.points,
            vec![vec![0.0], vec![2f64.sqrt()], vec![-(2f64.sqrt())]]
        );
        assert_eq!(r.weights, vec![0.5, 0.25, 0.25]);
    }

    #[test]
    fn cubature_moments() {
        for d in [1, 2, 3, 10] {
            let r = make_cubature(d);
            assert_eq!(r.len(), 2 * d + 1);
            assert!((r.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for a in 0..d {
                let m1: f64 = r.points.iter().zip(&r.weights).map(|(p, w)| w * p[a]).sum();
                assert!(m1.abs() < 1e-12);
                for b in 0..d {
                    let m2: f64 = r
                        .points
                        .iter()
                        .zip(&r.weights)
                        .map(|(p, w)| w * p[a] * p[b])
                        .sum();
                    assert!((m2 - if a == b { 1.0 } else { 0.0 }).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn step_config_from_targets() {
        let c = StepConfig::from_targets(0.4, 0.2, 0.1, Scheme::Asymptotic).unwrap();
        assert_eq!((c.k, c.l), (2, 2));
        let c = StepConfig::from_targets(0.2, 0.2, 0.1, Scheme::Asymptotic).unwrap();
        assert_eq!((c.k, c.l), (1, 2));
        let c = StepConfig::from_targets(0.1, 0.2, 0.1, Scheme::Asymptotic).unwrap();
        assert_eq!((c.k, c.l), (1, 1));
        let c = StepConfig::from_targets(0.2, 0.1, 0.05, Scheme::Asymptotic).unwrap();
        assert_eq!((c.k, c.l), (2, 2));
        assert!(StepConfig::new(0.0, 1, 1, Scheme::CholFree).is_err());
    }

    #[test]
    fn flat_brownian_steps() {
        let w = brownian(2);
        let z = [0.3, -1.0];
        let (m, c) = gauss_step_em(&w, &z, 0.2).unwrap();
        assert_eq!(m, z.to_vec());
        assert!(max_abs_diff(&c, &Matrix::identity(2).scale(0.2)) < 1e-16);
        for l in 1..4 {
            let (m, c) = gauss_step_asymptotic(&w, &z, 0.2, l).unwrap();
            assert_eq!(m, z.to_vec());
            assert!(max_abs_diff(&c, &Matrix::identity(2).scale(0.2)) < 1e-16);
        }
        let (m, f) = gauss_step_cholfree(&w, &z, 0.2).unwrap();
        assert_eq!(m, z.to_vec());
        assert_eq!(f.matrix(), &Matrix::identity(2).scale(0.2f64.sqrt()));
    }

    #[test]
    fn ou_hand_values() {
        let m = ou(1.0, 0.5);
        let (mu, cov) = gauss_step_em(&m, &[2.0], 0.1).unwrap();
        assert!((mu[0] - 1.8).abs() < 1e-15);
        assert!((cov[(0, 0)] - 0.025).abs() < 1e-15);
        let (mu, _) = gauss_step_cholfree(&m, &[2.0], 0.1).unwrap();
        assert!((mu[0] - 1.81).abs() < 1e-15);
        let (exact, _) = ou_exact_transition(1.0, 0.5, 2.0, 0.1);
        let (mu2, _) = gauss_step_asymptotic(&m, &[2.0], 0.1, 2).unwrap();
        assert!((mu2[0] - exact).abs() <= (1.8f64 - exact).abs());
    }

    #[test]
    fn cholfree_local_mean_error_is_cubic() {
        let m = ou(1.0, 0.5);
        let hs = [0.2, 0.1, 0.05];
        let errs: Vec<f64> = hs
            .iter()
            .map(|&h| {
                (gauss_step_cholfree(&m, &[2.0], h).unwrap().0[0]
                    - ou_exact_transition(1.0, 0.5, 2.0, h).0)
                    .abs()
            })
            .collect();
        let slope = (errs[0] / errs[2]).ln() / (hs[0] / hs[2]).ln();
        assert!((slope - 3.0).abs() < 0.15, "{slope}");
    }

    #[test]
    fn cholfree_rejects_full_diffusion() {
        let m = ParameterizedSde::new(2, &[], DiffusionKind::ConstantFull, &[]);
        let p = vec![0.1; m.n_params()];
        let err = gauss_step_cholfree(&m.bind(&p), &[0.0, 0.0], 0.1).unwrap_err();
        assert!(matches!(err, Error::KindMismatch(_)));
    }

    #[test]
    fn asymptotic_refinement_in_l() {
        // The `(I + dt J) Σ (I + dt J)ᵀ` propagation is first order in dt = h/L,
        // while the midpoint mean is second order.
        let sde = LinearSde {
            a: Matrix::from_rows(&[&[-1.0, 2.0], &[-0.5, -3.0]]),
            b: Matrix::from_rows(&[&[0.5, 0.0], &[0.2, 0.8]]),
        };
        let h = 0.5;
        let z = [1.0, 1.0];
        let exact_cov = lyapunov_reference(&sde.a, &sde.b, h);
        let flow = {
            // exp(hA) z via a fine RK4 run
            let n = 20_000;
            let dt = h / n as f64;
            let mut x = z.to_vec();
            let f = |x: &[f64]| sde.a.matvec(x);
            for _ in 0..n {
                let k1 = f(&x);
                let k2 = f(&axpy(&x, dt / 2.0, &k1));
                let k3 = f(&axpy(&x, dt / 2.0, &k2));
                let k4 = f(&axpy(&x, dt, &k3));
                x = (0..2)
                    .map(|i| x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
                    .collect();
            }
            x
        };
        let errs = |l| {
            let (m, c) = gauss_step_asymptotic(&sde, &z, h, l).unwrap();
            let em = m
                .iter()
                .zip(&flow)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            (em, max_abs_diff(&c, &exact_cov))
        };
        let mut prev = errs(4);
        for l in [8, 16, 32] {
            let e = errs(l);
            let (rm, rc) = (prev.0 / e.0, prev.1 / e.1);
            assert!((3.0..=5.0).contains(&rm), "L={l} mean ratio {rm}");
            assert!((1.7..=2.3).contains(&rc), "L={l} covariance ratio {rc}");
            prev = e;
        }
        assert!(prev.1 < 1e-2, "{prev:?}");
    }

    #[test]
    fn collapse_to_single_em_gaussian() {
        let sde = Benchmark::TwoDim {};
        let z = [0.4, -0.9];
        let cfg = StepConfig::new(0.2, 1, 1, Scheme::EulerMaruyama).unwrap();
        let mix = dyngma(
            &sde,
            &GaussianComponent::point(&z),
            &cfg,
            &make_cubature(2),
            DEFAULT_COMPONENT_CAP,
        )
        .unwrap();
        assert_eq!(mix.len(), 1);
        let (m, c) = gauss_step_em(&sde, &z, 0.2).unwrap();
        assert_eq!(mix.components[0].mean, m);
        assert_eq!(mix.components[0].covariance(), c);
        let x = [0.5, -1.0];
        let direct = gaussian_logpdf(&x, &m, &cholesky(&c).unwrap()).unwrap();
        assert_eq!(mix.logpdf(&x).unwrap(), direct);
    }

    #[test]
    fn component_counts_and_cap() {
        let sde = Benchmark::Benes { noise: 1.0 };
        let rule = make_cubature(1);
        let z = GaussianComponent::point(&[0.5]);
        let cfg = StepConfig::new(1.0, 2, 2, Scheme::Asymptotic).unwrap();
        assert_eq!(dyngma(&sde, &z, &cfg, &rule, 100).unwrap().len(), 3);
        let cfg = StepConfig::new(1.0, 3, 2, Scheme::Asymptotic).unwrap();
        assert_eq!(dyngma(&sde, &z, &cfg, &rule, 100).unwrap().len(), 9);
        assert!(matches!(
            dyngma(&sde, &z, &cfg, &rule, 8),
            Err(Error::ComponentBudgetExceeded { needed: 9, cap: 8 })
        ));
    }

    #[test]
    fn mixture_normalizes_in_one_dim() {
        let sde = Benchmark::Benes { noise: 1.0 };
        let rule = make_cubature(1);
        for scheme in [Scheme::EulerMaruyama, Scheme::Asymptotic, Scheme::CholFree] {
            for k in 1..=3 {
                let cfg = StepConfig::new(1.0, k, 2, scheme).unwrap();
                let mix =
                    dyngma(&sde, &GaussianComponent::point(&[0.5]), &cfg, &rule, 1000).unwrap();
                assert!((mix.total_weight() - 1.0).abs() < 1e-12);
                let mass = trapezoid(|x| mix.logpdf(&[x]).unwrap().exp(), -12.0, 12.0, 12_000);
                assert!((mass - 1.0).abs() < 1e-3, "{scheme:?} K={k}: {mass}");
            }
        }
    }

    #[test]
    fn beats_single_em_on_benes() {
        let sde = Benchmark::Benes { noise: 1.0 };
        let cfg = StepConfig::new(1.0, 2, 2, Scheme::Asymptotic).unwrap();
        let mix = dyngma(
            &sde,
            &GaussianComponent::point(&[0.5]),
            &cfg,
            &make_cubature(1),
            1000,
        )
        .unwrap();
        let (m, c) = gauss_step_em(&sde, &[0.5], 1.0).unwrap();
        let em = GaussianComponent {
            weight: 1.0,
            mean: m,
            factor: cholesky(&c).unwrap(),
        };
        let em = MixtureDensity {
            dim: 1,
            components: vec![em],
        };
        let exact = |x: f64| benes_exact_density(1.0, x, 0.5).unwrap();
        let l1_mix = trapezoid(
            |x| (mix.logpdf(&[x]).unwrap().exp() - exact(x)).abs(),
            -8.0,
            9.0,
            8000,
        );
        let l1_em = trapezoid(
            |x| (em.logpdf(&[x]).unwrap().exp() - exact(x)).abs(),
            -8.0,
            9.0,
            8000,
        );
        assert!(l1_mix < l1_em, "{l1_mix} vs {l1_em}");
    }

    #[test]
    fn mixture_logpdf_edge_cases() {
        let c = GaussianComponent {
            weight: 0.5,
            mean: vec![0.2],
            factor: LowerTriangular::from_lower(Matrix::diag(&[0.7])),
        };
        let single = MixtureDensity {
            dim: 1,
            components: vec![GaussianComponent {
                weight: 1.0,
                ..c.clone()
            }],
        };
        let double = MixtureDensity {
            dim: 1,
            components: vec![c.clone(), c.clone()],
        };
        let a = single.logpdf(&[0.9]).unwrap();
        let b = double.logpdf(&[0.9]).unwrap();
        assert!((a - b).abs() < 1e-15);
        assert_eq!(a, gaussian_logpdf(&[0.9], &[0.2], &c.factor).unwrap());
        let point = MixtureDensity {
            dim: 1,
            components: vec![GaussianComponent::point(&[0.0])],
        };
        assert!(matches!(
            point.logpdf(&[0.0]),
            Err(Error::DegenerateComponent { index: 0 })
        ));
    }

    #[test]
    fn cubature_baseline_on_linear_systems() {
        let w = brownian(2);
        let (m, c) =
            gaussian_cubature_density(&w, &[1.0, 2.0], 0.3, 0.01, &make_cubature(2)).unwrap();
        assert_eq!(m, vec![1.0, 2.0]);
        assert!(max_abs_diff(&c, &Matrix::identity(2).scale(0.3)) < 1e-14);

        let sde = LinearSde {
            a: Matrix::from_rows(&[&[-1.0, 0.5], &[0.0, -2.0]]),
            b: Matrix::from_rows(&[&[0.3, 0.0], &[0.1, 0.4]]),
        };
        let exact = lyapunov_reference(&sde.a, &sde.b, 0.4);
        let e1 = max_abs_diff(
            &gaussian_cubature_density(&sde, &[1.0, 1.0], 0.4, 0.01, &make_cubature(2))
                .unwrap()
                .1,
            &exact,
        );
        let e2 = max_abs_diff(
            &gaussian_cubature_density(&sde, &[1.0, 1.0], 0.4, 0.005, &make_cubature(2))
                .unwrap()
                .1,
            &exact,
        );
        assert!(e1 < 5e-3 && (1.7..2.3).contains(&(e1 / e2)), "{e1} {e2}");

        let o = ou(1.0, 0.5);
        let (m, c) = gaussian_cubature_density(&o, &[2.0], 1.0, 0.001, &make_cubature(1)).unwrap();
        let (em, ev) = ou_exact_transition(1.0, 0.5, 2.0, 1.0);
        assert!((m[0] - em).abs() < 2e-3 && (c[(0, 0)] - ev).abs() < 2e-3);
        assert!(gaussian_cubature_density(&o, &[2.0], 1.0, 0.3, &make_cubature(1)).is_err());
    }

    #[test]
    fn cubature_baseline_reports_covariance_breakdown() {
        // a strongly expanding pair of modes with an oversized Euler step
        let sde = LinearSde {
            a: Matrix::from_rows(&[&[-40.0, 0.0], &[0.0, -40.0]]),
            b: Matrix::from_rows(&[&[0.1, 0.0], &[0.1, 0.1]]),
        };
        let err =
            gaussian_cubature_density(&sde, &[1.0, 1.0], 1.0, 0.1, &make_cubature(2)).unwrap_err();
        assert!(matches!(err, Error::NonPositiveDefinite { .. }), "{err:?}");
    }

    fn fd_check(scheme: Scheme, kind: DiffusionKind, seed: u64) {
        let model = ParameterizedSde::new(2, &[6], kind, &[4]);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut theta = model.init(&mut rng).values;
        for v in theta.iter_mut() {
            *v += rng.random_range(-0.1..0.1);
        }
        let z = [0.3, -0.2];
        let x = [0.45, -0.1];
        let cfg = StepConfig::new(0.2, 2, 2, scheme).unwrap();
        let rule = make_cubature(2);
        let f = |p: &[f64]| {
            let mix = dyngma(
                &model.bind(p),
                &GaussianComponent::point(&z),
                &cfg,
                &rule,
                100,
            )
            .unwrap();
            mix.logpdf(&x).unwrap()
        };
        let tape = Tape::new();
        let tp = tape.leaves(&theta);
        let tz: Vec<_> = z.iter().map(|&v| tape.constant(v)).collect();
        let tx: Vec<_> = x.iter().map(|&v| tape.constant(v)).collect();
        let mix = dyngma(
            &model.bind(&tp),
            &GaussianComponent::point(&tz),
            &cfg,
            &rule,
            100,
        )
        .unwrap();
        let out = mix.logpdf(&tx).unwrap();
        assert!((out.value() - f(&theta)).abs() < 1e-12);
        let g = tape.grad(out, &tp).unwrap();
        let scale = g.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        for k in 0..theta.len() {
            let mut a = theta.clone();
            let mut b = theta.clone();
            a[k] += 1e-5;
            b[k] -= 1e-5;
            let fd = (f(&a) - f(&b)) / 2e-5;
            assert!(
                (fd - g[k]).abs() <= 1e-4 * scale.max(1.0),
                "{scheme:?} {kind:?} coord {k}: {fd} vs {}",
                g[k]
            );
        }
    }

    #[test]
    fn dyngma_gradients_match_finite_differences() {
        fd_check(Scheme::Asymptotic, DiffusionKind::ConstantFull, 1);
        fd_check(Scheme::Asymptotic, DiffusionKind::StateDependent, 2);
        fd_check(Scheme::CholFree, DiffusionKind::StateDependent, 3);
        fd_check(Scheme::CholFree, DiffusionKind::ConstantTriangular, 4);
        fd_check(Scheme::EulerMaruyama, DiffusionKind::ConstantFull, 5);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn weights_are_conserved(
            d in 1usize..4,
            k in 1usize..4,
            scheme_ix in 0usize..3,
            seed in any::<u64>(),
        ) {
            let scheme = [Scheme::EulerMaruyama, Scheme::Asymptotic, Scheme::CholFree][scheme_ix];
            let model = ParameterizedSde::new(d, &[5], DiffusionKind::StateDependent, &[3]);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let theta = model.init(&mut rng).values;
            let z: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let cfg = StepConfig::new(0.3, k, 2, scheme).unwrap();
            let mix = dyngma(&model.bind(&theta), &GaussianComponent::point(&z), &cfg, &make_cubature(d), DEFAULT_COMPONENT_CAP).unwrap();
            prop_assert!((mix.total_weight() - 1.0).abs() < 1e-12);
            prop_assert!(mix.len() <= (2 * d + 1).pow(k as u32));
        }
    }
}
