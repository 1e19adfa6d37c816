//! Invariant distributions: Monte Carlo histograms, free-energy surfaces,
//! the residual method for the generalized potential `V = −ε log p`, and a
//! finite-volume stationary Fokker–Planck solve for 2-d references.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Layout, Mlp, MlpSpec, ParameterVector, Real, Var};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::sde::SdeModel;
use crate::simulate::{em_step, fmt_real, RngStream};
use crate::train::{reduce_terms, AdamState, EpochRecord, Schedule};

/// `n + 1` equally spaced edges.
pub fn uniform_edges(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..=n)
        .map(|i| lo + (hi - lo) * i as f64 / n as f64)
        .collect()
}

fn check_edges(edges: &[Vec<f64>]) -> Result<()> {
    if edges.is_empty() {
        return Err(Error::DegenerateGrid("no axes".into()));
    }
    for (k, e) in edges.iter().enumerate() {
        if e.len() < 2 || e.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::DegenerateGrid(format!(
                "axis {k} edges must be strictly increasing"
            )));
        }
    }
    Ok(())
}

fn bin_of(edges: &[f64], v: f64) -> Option<usize> {
    let n = edges.len() - 1;
    if !(v >= edges[0] && v <= edges[n]) {
        return None;
    }
    Some((edges.partition_point(|&e| e <= v) - 1).min(n - 1))
}

fn centers(edges: &[f64]) -> Vec<f64> {
    edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
}

/// Normalized cell masses on a tensor grid; the last axis varies fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct HistogramGrid {
    pub edges: Vec<Vec<f64>>,
    pub masses: Vec<f64>,
}

impl HistogramGrid {
    /// Bins the samples; points outside the grid are dropped.
    pub fn from_samples<'a, I>(edges: Vec<Vec<f64>>, samples: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        check_edges(&edges)?;
        let shape: Vec<usize> = edges.iter().map(|e| e.len() - 1).collect();
        let mut counts = vec![0u64; shape.iter().product()];
        let mut inside = 0u64;
        'next: for x in samples {
            if x.len() != edges.len() {
                return Err(Error::DimensionMismatch {
                    expected: edges.len(),
                    got: x.len(),
                });
            }
            let mut flat = 0;
            for (k, e) in edges.iter().enumerate() {
                match bin_of(e, x[k]) {
                    Some(b) => flat = flat * shape[k] + b,
                    None => continue 'next,
                }
            }
            counts[flat] += 1;
            inside += 1;
        }
        if inside == 0 {
            return Err(Error::DegenerateGrid("no samples inside the grid".into()));
        }
        let masses = counts.iter().map(|&c| c as f64 / inside as f64).collect();
        Ok(Self { edges, masses })
    }

    pub fn shape(&self) -> Vec<usize> {
        self.edges.iter().map(|e| e.len() - 1).collect()
    }

    pub fn centers(&self, axis: usize) -> Vec<f64> {
        centers(&self.edges[axis])
    }

    fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let shape = self.shape();
        let mut idx = vec![0; shape.len()];
        for k in (0..shape.len()).rev() {
            idx[k] = flat % shape[k];
            flat /= shape[k];
        }
        idx
    }

    /// Mass divided by cell volume.
    pub fn density(&self) -> Vec<f64> {
        (0..self.masses.len())
            .map(|f| {
                let idx = self.multi_index(f);
                let vol: f64 = idx
                    .iter()
                    .enumerate()
                    .map(|(k, &i)| self.edges[k][i + 1] - self.edges[k][i])
                    .product();
                self.masses[f] / vol
            })
            .collect()
    }

    /// One row per cell: centers then density.
    pub fn to_csv(&self) -> String {
        let d = self.edges.len();
        let mut s: String = (0..d).map(|k| format!("x{k},")).collect();
        s.push_str("density\n");
        for (f, p) in self.density().iter().enumerate() {
            for (k, i) in self.multi_index(f).into_iter().enumerate() {
                s.push_str(&fmt_real(0.5 * (self.edges[k][i] + self.edges[k][i + 1])));
                s.push(',');
            }
            s.push_str(&fmt_real(*p));
            s.push('\n');
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    pub x0: Vec<f64>,
    pub substep: f64,
    /// Fine steps discarded before the first sample.
    pub burn_in: usize,
    pub n_samples: usize,
    /// Fine steps between samples.
    #[serde(default = "one")]
    pub thin: usize,
}

fn one() -> usize {
    1
}

/// One long Euler-Maruyama chain, sampled after burn-in every `thin` steps.
pub fn mc_samples<M: SdeModel<f64> + ?Sized>(
    sde: &M,
    cfg: &McConfig,
    rng: &mut RngStream,
) -> Result<Vec<Vec<f64>>> {
    if cfg.burn_in == 0 || cfg.n_samples == 0 || cfg.thin == 0 {
        return Err(Error::InvalidArgument(
            "burn_in, n_samples and thin must be positive".into(),
        ));
    }
    if cfg.x0.len() != sde.dim() {
        return Err(Error::DimensionMismatch {
            expected: sde.dim(),
            got: cfg.x0.len(),
        });
    }
    let mut x = cfg.x0.clone();
    for _ in 0..cfg.burn_in {
        em_step(sde, &mut x, cfg.substep, rng)?;
    }
    let mut out = Vec::with_capacity(cfg.n_samples);
    for _ in 0..cfg.n_samples {
        for _ in 0..cfg.thin {
            em_step(sde, &mut x, cfg.substep, rng)?;
        }
        out.push(x.clone());
    }
    Ok(out)
}

pub fn mc_invariant<M: SdeModel<f64> + ?Sized>(
    sde: &M,
    cfg: &McConfig,
    edges: Vec<Vec<f64>>,
    rng: &mut RngStream,
) -> Result<HistogramGrid> {
    let samples = mc_samples(sde, cfg, rng)?;
    HistogramGrid::from_samples(edges, samples.iter().map(Vec::as_slice))
}

/// `−log` of a marginal histogram density.
///
/// Empty cells carry the largest finite value plus one and are flagged in `empty`.
#[derive(Clone, Debug, PartialEq)]
pub struct FreeEnergy {
    pub dims: Vec<usize>,
    pub edges: Vec<Vec<f64>>,
    pub values: Vec<f64>,
    pub empty: Vec<bool>,
}

impl FreeEnergy {
    pub fn to_csv(&self) -> String {
        let shape: Vec<usize> = self.edges.iter().map(|e| e.len() - 1).collect();
        let mut s: String = self.dims.iter().map(|k| format!("x{k},")).collect();
        s.push_str("value,empty\n");
        for f in 0..self.values.len() {
            let mut rem = f;
            let mut idx = vec![0; shape.len()];
            for k in (0..shape.len()).rev() {
                idx[k] = rem % shape[k];
                rem /= shape[k];
            }
            for (k, i) in idx.into_iter().enumerate() {
                s.push_str(&fmt_real(0.5 * (self.edges[k][i] + self.edges[k][i + 1])));
                s.push(',');
            }
            s.push_str(&format!(
                "{},{}\n",
                fmt_real(self.values[f]),
                u8::from(self.empty[f])
            ));
        }
        s
    }
}

/// Free energy on the marginal over `dims` (one or two coordinates).
pub fn free_energy(
    samples: &[Vec<f64>],
    dims: &[usize],
    edges: Vec<Vec<f64>>,
) -> Result<FreeEnergy> {
    let d = samples.first().map(Vec::len).ok_or(Error::EmptyInput)?;
    if dims.is_empty() || dims.len() != edges.len() {
        return Err(Error::DegenerateGrid(
            "one edge vector per marginal coordinate".into(),
        ));
    }
    if dims.iter().any(|&k| k >= d) || (dims.len() == 2 && dims[0] == dims[1]) {
        return Err(Error::DegenerateGrid(format!(
            "marginal dims {dims:?} invalid for dimension {d}"
        )));
    }
    let proj: Vec<Vec<f64>> = samples
        .iter()
        .map(|x| dims.iter().map(|&k| x[k]).collect())
        .collect();
    let hist = HistogramGrid::from_samples(edges, proj.iter().map(Vec::as_slice))?;
    let dens = hist.density();
    let empty: Vec<bool> = dens.iter().map(|&p| p == 0.0).collect();
    let mut values: Vec<f64> = dens
        .iter()
        .map(|&p| if p > 0.0 { -p.ln() } else { f64::NAN })
        .collect();
    let top = values
        .iter()
        .copied()
        .filter(|v| v.is_finite())
        .fold(f64::NEG_INFINITY, f64::max);
    for (v, &e) in values.iter_mut().zip(&empty) {
        if e {
            *v = top + 1.0;
        }
    }
    Ok(FreeEnergy {
        dims: dims.to_vec(),
        edges: hist.edges,
        values,
        empty,
    })
}

/// Two-coordinate free-energy surface.
pub fn free_energy_marginal(
    samples: &[Vec<f64>],
    dims: (usize, usize),
    edges: (Vec<f64>, Vec<f64>),
) -> Result<FreeEnergy> {
    free_energy(samples, &[dims.0, dims.1], vec![edges.0, edges.1])
}

/// `ε̂ = ‖σ‖_F²/2` and `Σ̄ = σσᵀ/(2ε̂)` for a constant diffusion.
#[derive(Clone, Debug, PartialEq)]
pub struct InvariantConfig {
    pub eps_hat: f64,
    pub sigma_bar: Matrix<f64>,
    pub constant_diffusion: bool,
    /// Weights of the drift-decomposition and orthogonality residuals.
    pub weights: (f64, f64),
}

impl InvariantConfig {
    pub fn from_diffusion(sigma: &Matrix<f64>) -> Result<Self> {
        let fro2 = sigma.frobenius().powi(2);
        if !(fro2 > 0.0) {
            return Err(Error::InvalidArgument("diffusion must be nonzero".into()));
        }
        let eps = fro2 / 2.0;
        Ok(Self {
            eps_hat: eps,
            sigma_bar: sigma.gram().scale(1.0 / (2.0 * eps)),
            constant_diffusion: true,
            weights: (1.0, 1.0),
        })
    }

    /// Probes σ at `points`; the constant flag is cleared if it varies.
    pub fn from_sde<M: SdeModel<f64> + ?Sized>(sde: &M, points: &[Vec<f64>]) -> Result<Self> {
        let first = points.first().ok_or(Error::EmptyInput)?;
        let s0 = sde.diffusion(first)?;
        let mut cfg = Self::from_diffusion(&s0)?;
        let scale = s0.frobenius();
        for x in points.iter().skip(1) {
            if sde.diffusion(x)?.add(&s0.scale(-1.0)).frobenius() > 1e-12 * scale {
                cfg.constant_diffusion = false;
                break;
            }
        }
        Ok(cfg)
    }
}

/// `V(x), ∇V(x)` and `g(x), ∇·g(x)`.
pub trait PotentialHead<R: Real> {
    fn potential(&self, x: &[R]) -> Result<(R, Vec<R>)>;
    fn auxiliary(&self, x: &[R]) -> Result<(Vec<R>, R)>;
}

/// Scalar `V_φ` and vector `g_φ` networks in one parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct PotentialModel {
    dim: usize,
    pub v: Mlp,
    pub g: Mlp,
    layout: Layout,
}

impl PotentialModel {
    pub fn new(dim: usize, hidden: &[usize]) -> Self {
        let mut layout = Layout::new();
        let v = Mlp::register(&mut layout, "potential", MlpSpec::new(dim, hidden, 1));
        let g = Mlp::register(&mut layout, "auxiliary", MlpSpec::new(dim, hidden, dim));
        Self { dim, v, g, layout }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn init<G: Rng + ?Sized>(&self, rng: &mut G) -> ParameterVector {
        let mut p = ParameterVector::zeros(self.layout.clone());
        self.v.init_glorot(&mut p.values, rng);
        self.g.init_glorot(&mut p.values, rng);
        p
    }

    pub fn bind<'a, R: Real>(&'a self, params: &'a [R]) -> BoundPotential<'a, R> {
        assert_eq!(params.len(), self.layout.len(), "parameter length");
        BoundPotential {
            model: self,
            params,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct BoundPotential<'a, R> {
    pub model: &'a PotentialModel,
    pub params: &'a [R],
}

impl<R: Real> PotentialHead<R> for BoundPotential<'_, R> {
    fn potential(&self, x: &[R]) -> Result<(R, Vec<R>)> {
        self.model.v.value_and_input_gradient(self.params, x)
    }

    fn auxiliary(&self, x: &[R]) -> Result<(Vec<R>, R)> {
        self.model.g.value_and_divergence(self.params, x)
    }
}

/// Observation points with the fixed learned drift evaluated once.
#[derive(Clone, Debug)]
pub struct ResidualPoint {
    pub x: Vec<f64>,
    pub drift: Vec<f64>,
}

pub fn residual_points<M: SdeModel<f64> + ?Sized>(
    sde: &M,
    points: &[Vec<f64>],
) -> Result<Vec<ResidualPoint>> {
    points
        .iter()
        .map(|x| {
            Ok(ResidualPoint {
                x: x.clone(),
                drift: sde.drift(x)?,
            })
        })
        .collect()
}

/// `w₁‖−Σ̄∇V + g − f‖² + w₂(g·∇V − ε̂∇·g)²` at one point.
pub fn residual_term<R: Real, H: PotentialHead<R> + ?Sized>(
    head: &H,
    like: R,
    p: &ResidualPoint,
    cfg: &InvariantConfig,
) -> Result<R> {
    if !cfg.constant_diffusion {
        return Err(Error::KindMismatch(
            "residual method needs a constant diffusion",
        ));
    }
    let x: Vec<R> = p.x.iter().map(|&v| like.lift(v)).collect();
    let (_, grad_v) = head.potential(&x)?;
    let (g, div_g) = head.auxiliary(&x)?;
    let d = x.len();
    let mut first = like.lift(0.0);
    for i in 0..d {
        let coeffs: Vec<R> = (0..d).map(|j| like.lift(-cfg.sigma_bar[(i, j)])).collect();
        let r = R::dot_add(&coeffs, &grad_v, g[i] - p.drift[i]);
        first = first + r * r;
    }
    let ortho = R::dot_add(&g, &grad_v, div_g * -cfg.eps_hat);
    Ok(first * cfg.weights.0 + ortho * ortho * cfg.weights.1)
}

/// Mean residual over `points`.
pub fn residual_loss<R: Real, H: PotentialHead<R> + ?Sized>(
    head: &H,
    like: R,
    points: &[ResidualPoint],
    cfg: &InvariantConfig,
) -> Result<R> {
    if points.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut acc = like.lift(0.0);
    for p in points {
        acc = acc + residual_term(head, like, p, cfg)?;
    }
    Ok(acc / points.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialTrainConfig {
    pub epochs: usize,
    #[serde(default)]
    pub batch_size: usize,
    pub lr_start: f64,
    pub lr_end: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "unit_weight")]
    pub drift_weight: f64,
    #[serde(default = "unit_weight")]
    pub orthogonality_weight: f64,
}

fn unit_weight() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainedPotential {
    pub params: ParameterVector,
    /// Subtracted from `V_φ` so the evaluation-grid minimum is 0.
    pub shift: f64,
    pub history: Vec<EpochRecord>,
}

impl TrainedPotential {
    pub fn raw(&self, model: &PotentialModel, x: &[f64]) -> Result<f64> {
        Ok(model.v.forward(&self.params.values, x)?[0])
    }

    pub fn potential(&self, model: &PotentialModel, x: &[f64]) -> Result<f64> {
        Ok(self.raw(model, x)? - self.shift)
    }

    /// Moves the shift so that `min_grid V = 0`; a second call changes nothing.
    pub fn apply_shift(&mut self, model: &PotentialModel, grid: &[Vec<f64>]) -> Result<()> {
        let mut lo = f64::INFINITY;
        for x in grid {
            lo = lo.min(self.potential(model, x)?);
        }
        if !lo.is_finite() {
            return Err(Error::NonFinite("potential on the evaluation grid".into()));
        }
        self.shift += lo;
        Ok(())
    }
}

/// Adam on the residual loss, then the shift on `eval_grid`.
pub fn train_potential<M: SdeModel<f64> + ?Sized>(
    sde: &M,
    points: &[Vec<f64>],
    model: &PotentialModel,
    init: ParameterVector,
    cfg: &PotentialTrainConfig,
    eval_grid: &[Vec<f64>],
) -> Result<TrainedPotential> {
    let mut icfg = InvariantConfig::from_sde(sde, points)?;
    if !icfg.constant_diffusion {
        return Err(Error::KindMismatch(
            "residual method needs a constant diffusion",
        ));
    }
    icfg.weights = (cfg.drift_weight, cfg.orthogonality_weight);
    let data = residual_points(sde, points)?;
    let schedule = Schedule {
        lr_start: cfg.lr_start,
        lr_end: cfg.lr_end,
        total_epochs: cfg.epochs,
    };
    let mut params = init;
    let mut adam = AdamState::new(params.len());
    let mut rng = RngStream::new(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let batch = if cfg.batch_size == 0 {
        data.len()
    } else {
        cfg.batch_size.min(data.len())
    };
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let lr = schedule.lr_at(epoch)?;
        if batch < data.len() {
            order.shuffle(&mut rng);
        }
        let mut sum = 0.0;
        let mut n = 0;
        for idx in order.chunks_exact(batch) {
            let items: Vec<&ResidualPoint> = idx.iter().map(|&i| &data[i]).collect();
            let w = 1.0 / items.len() as f64;
            let (l, g) = reduce_terms(
                &items,
                &params.values,
                64,
                &|vars: &[Var<'_>], p: &&ResidualPoint| {
                    let head = model.bind(vars);
                    Ok(residual_term(&head, vars[0], p, &icfg)? * w)
                },
            )?;
            adam.step(&mut params.values, &g, lr)?;
            sum += l;
            n += 1;
        }
        history.push(EpochRecord {
            epoch,
            lr,
            loss: sum / n as f64,
        });
    }
    let mut out = TrainedPotential {
        params,
        shift: 0.0,
        history,
    };
    if !eval_grid.is_empty() {
        out.apply_shift(model, eval_grid)?;
    }
    Ok(out)
}

/// Stationary density on a cell-centered 2-d grid.
#[derive(Clone, Debug, PartialEq)]
pub struct FpkSolution {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    /// Row-major in `(x, y)`, integrating to 1.
    pub density: Vec<f64>,
    /// `‖Aᵀp‖₁` relative to the total outflow.
    pub residual: f64,
}

impl FpkSolution {
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.density[i * self.ys.len() + j]
    }

    /// `−ε log p` shifted to minimum 0.
    pub fn potential(&self, eps: f64) -> Vec<f64> {
        let v: Vec<f64> = self
            .density
            .iter()
            .map(|&p| -eps * p.max(f64::MIN_POSITIVE).ln())
            .collect();
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        v.into_iter().map(|x| x - lo).collect()
    }

    /// Bilinear interpolation of `values` (grid layout), clamped to the grid.
    pub fn interpolate(&self, values: &[f64], x: f64, y: f64) -> f64 {
        let locate = |c: &[f64], v: f64| {
            let h = c[1] - c[0];
            let t = ((v - c[0]) / h).clamp(0.0, (c.len() - 1) as f64);
            let i = (t.floor() as usize).min(c.len() - 2);
            (i, t - i as f64)
        };
        let (i, a) = locate(&self.xs, x);
        let (j, b) = locate(&self.ys, y);
        let ny = self.ys.len();
        let v = |i: usize, j: usize| values[i * ny + j];
        (1.0 - a) * ((1.0 - b) * v(i, j) + b * v(i, j + 1))
            + a * ((1.0 - b) * v(i + 1, j) + b * v(i + 1, j + 1))
    }
}

/// `z / (eᶻ − 1)`.
fn bernoulli(z: f64) -> f64 {
    if z.abs() < 1e-8 {
        1.0 - 0.5 * z
    } else {
        z / z.exp_m1()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FpkConfig {
    pub n: (usize, usize),
}

impl Default for FpkConfig {
    fn default() -> Self {
        Self { n: (200, 200) }
    }
}

/// Rate matrix stored over the band `|r − c| ≤ b`.
struct Band {
    b: usize,
    w: usize,
    q: Vec<f64>,
}

impl Band {
    fn new(n: usize, b: usize) -> Self {
        let w = 2 * b + 1;
        Self {
            b,
            w,
            q: vec![0.0; n * w],
        }
    }

    #[inline]
    fn at(&self, r: usize, c: usize) -> usize {
        r * self.w + c + self.b - r
    }
}

/// Finite-volume stationary FPK solve with zero-flux walls.
///
/// Face fluxes use exponential fitting, which reduces to central
/// differences when the cell Péclet number is small and keeps the discrete
/// generator a rate matrix otherwise. Its null vector comes from banded
/// GTH elimination, which never subtracts.
pub fn fpk_stationary_2d<M: SdeModel<f64> + ?Sized>(
    sde: &M,
    domain: [(f64, f64); 2],
    cfg: &FpkConfig,
) -> Result<FpkSolution> {
    if sde.dim() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            got: sde.dim(),
        });
    }
    let (nx, ny) = cfg.n;
    if nx < 2 || ny < 2 {
        return Err(Error::DegenerateGrid(
            "need at least 2 cells per axis".into(),
        ));
    }
    let hx = (domain[0].1 - domain[0].0) / nx as f64;
    let hy = (domain[1].1 - domain[1].0) / ny as f64;
    let xs: Vec<f64> = (0..nx)
        .map(|i| domain[0].0 + (i as f64 + 0.5) * hx)
        .collect();
    let ys: Vec<f64> = (0..ny)
        .map(|j| domain[1].0 + (j as f64 + 0.5) * hy)
        .collect();
    let diff =
        |x: f64, y: f64| -> Result<Matrix<f64>> { Ok(sde.diffusion(&[x, y])?.gram().scale(0.5)) };
    let n = nx * ny;
    let idx = |i: usize, j: usize| i * ny + j;
    let mut band = Band::new(n, ny);
    let set = |band: &mut Band, r: usize, c: usize, v: f64| {
        let k = band.at(r, c);
        band.q[k] = v;
    };
    for i in 0..nx {
        for j in 0..ny {
            if i + 1 < nx {
                let (fx, fy) = (domain[0].0 + (i + 1) as f64 * hx, ys[j]);
                let a = diff(fx, fy)?;
                if a[(0, 1)].abs() > 1e-12 * (a[(0, 0)] + a[(1, 1)]) {
                    return Err(Error::KindMismatch(
                        "finite-volume solve needs a diagonal diffusion",
                    ));
                }
                let z = sde.drift(&[fx, fy])?[0] * hx / a[(0, 0)];
                let base = a[(0, 0)] / (hx * hx);
                set(&mut band, idx(i, j), idx(i + 1, j), base * bernoulli(-z));
                set(&mut band, idx(i + 1, j), idx(i, j), base * bernoulli(z));
            }
            if j + 1 < ny {
                let (fx, fy) = (xs[i], domain[1].0 + (j + 1) as f64 * hy);
                let a = diff(fx, fy)?;
                let z = sde.drift(&[fx, fy])?[1] * hy / a[(1, 1)];
                let base = a[(1, 1)] / (hy * hy);
                set(&mut band, idx(i, j), idx(i, j + 1), base * bernoulli(-z));
                set(&mut band, idx(i, j + 1), idx(i, j), base * bernoulli(z));
            }
        }
    }
    if band.q.iter().any(|r| !r.is_finite()) {
        return Err(Error::NonFinite("FPK rates".into()));
    }
    let original = band.q.clone();
    let b = band.b;
    let mut row_k = Vec::with_capacity(b);
    for k in (1..n).rev() {
        let lo = k.saturating_sub(b);
        row_k.clear();
        row_k.extend((lo..k).map(|j| band.q[band.at(k, j)]));
        let s: f64 = row_k.iter().sum();
        if !(s > 0.0) {
            return Err(Error::Degenerate { row: k });
        }
        for i in lo..k {
            let at = band.at(i, k);
            let f = band.q[at] / s;
            band.q[at] = f;
            if f == 0.0 {
                continue;
            }
            let base = band.at(i, lo);
            for (q, &qkj) in band.q[base..base + row_k.len()].iter_mut().zip(&row_k) {
                *q += f * qkj;
            }
        }
    }
    let mut p = vec![0.0; n];
    p[0] = 1.0;
    for j in 1..n {
        let lo = j.saturating_sub(b);
        p[j] = (lo..j).map(|i| p[i] * band.q[band.at(i, j)]).sum();
    }
    // flow balance on the unmodified rates
    band.q = original;
    let mut residual: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for c in 0..n {
        let (lo, hi) = (c.saturating_sub(b), (c + b + 1).min(n));
        let mut flow = 0.0;
        let mut out = 0.0;
        for r in lo..hi {
            if r != c {
                flow += p[r] * band.q[band.at(r, c)] - p[c] * band.q[band.at(c, r)];
                out += p[c] * band.q[band.at(c, r)];
            }
        }
        residual += flow.abs();
        scale += out;
    }
    let mass: f64 = p.iter().sum::<f64>() * hx * hy;
    Ok(FpkSolution {
        xs,
        ys,
        density: p.iter().map(|v| v / mass).collect(),
        residual: residual / scale,
    })
}
