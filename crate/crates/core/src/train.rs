//! Likelihood losses, Adam, the learning-rate schedule and the training loop.

use std::path::PathBuf;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{ParameterVector, Real, Tape, Var};
use crate::density::{
    ceil_tolerant, dyngma, gauss_step, gaussian_cubature_density, make_cubature, CubatureRule,
    GaussianComponent, Scheme, StepConfig, DEFAULT_COMPONENT_CAP,
};
use crate::error::{Error, Result};
use crate::linalg::{cholesky, gaussian_logpdf};
use crate::sde::{BoundSde, ParameterizedSde, SdeModel};
use crate::simulate::{Dataset, RngStream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossScheme {
    /// Mixture recursion with the asymptotic Gaussian step.
    DyngmaAlg1,
    /// Mixture recursion with the factor-free step.
    DyngmaAlg2,
    EulerMaruyama,
    GaussianCubature,
}

impl LossScheme {
    pub fn name(&self) -> &'static str {
        match self {
            Self::DyngmaAlg1 => "dyngma_alg1",
            Self::DyngmaAlg2 => "dyngma_alg2",
            Self::EulerMaruyama => "euler_maruyama",
            Self::GaussianCubature => "gaussian_cubature",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossSpec {
    pub scheme: LossScheme,
    /// Sub-step target: `K = ⌈Δt / h_target⌉`.
    #[serde(default = "default_h_target")]
    pub h_target: f64,
    /// Inner step of the asymptotic step: `L = round(h / inner_step)`.
    #[serde(default = "default_inner_step")]
    pub inner_step: f64,
    /// Euler step of the moment-ODE baseline.
    #[serde(default = "default_cubature_substep")]
    pub cubature_substep: f64,
    #[serde(default = "default_gammas")]
    pub gammas: Vec<usize>,
    #[serde(default = "default_cap")]
    pub component_cap: usize,
}

fn default_h_target() -> f64 {
    0.1
}
fn default_inner_step() -> f64 {
    0.05
}
fn default_cubature_substep() -> f64 {
    0.005
}
fn default_gammas() -> Vec<usize> {
    vec![1]
}
fn default_cap() -> usize {
    DEFAULT_COMPONENT_CAP
}

impl LossSpec {
    pub fn new(scheme: LossScheme) -> Self {
        Self {
            scheme,
            h_target: default_h_target(),
            inner_step: default_inner_step(),
            cubature_substep: default_cubature_substep(),
            gammas: default_gammas(),
            component_cap: default_cap(),
        }
    }

    pub fn with_steps(mut self, h_target: f64, inner_step: f64) -> Self {
        self.h_target = h_target;
        self.inner_step = inner_step;
        self
    }

    pub fn with_gammas(mut self, gammas: &[usize]) -> Self {
        self.gammas = gammas.to_vec();
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.gammas.is_empty() || self.gammas.contains(&0) {
            return Err(Error::InvalidArgument(
                "gammas must be a nonempty set of positive integers".into(),
            ));
        }
        if !(self.h_target > 0.0 && self.inner_step > 0.0 && self.cubature_substep > 0.0) {
            return Err(Error::InvalidArgument(
                "step targets must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// One observed transition.
#[derive(Clone, Debug, PartialEq)]
pub struct Pair {
    pub prev: Vec<f64>,
    pub next: Vec<f64>,
    pub dt: f64,
}

/// Pairs `(y_{(m−1)γ}, y_{mγ})` from every trajectory long enough to hold one.
pub fn dataset_pairs(data: &Dataset, gamma: usize) -> Vec<Pair> {
    assert!(gamma >= 1);
    let mut out = Vec::new();
    for tr in &data.trajectories {
        let mut i = gamma;
        while i < tr.len() {
            out.push(Pair {
                prev: tr.states[i - gamma].clone(),
                next: tr.states[i].clone(),
                dt: tr.times[i] - tr.times[i - gamma],
            });
            i += gamma;
        }
    }
    out
}

/// `log p_h(Δt, next | prev)` under the chosen scheme.
pub fn pair_logpdf<R: Real, M: SdeModel<R> + ?Sized>(
    sde: &M,
    like: R,
    pair: &Pair,
    spec: &LossSpec,
    rule: &CubatureRule,
) -> Result<R> {
    if !(pair.dt > 0.0) {
        return Err(Error::NonpositiveTime(pair.dt));
    }
    let z: Vec<R> = pair.prev.iter().map(|&v| like.lift(v)).collect();
    let x: Vec<R> = pair.next.iter().map(|&v| like.lift(v)).collect();
    match spec.scheme {
        LossScheme::DyngmaAlg1 | LossScheme::DyngmaAlg2 => {
            let scheme = if spec.scheme == LossScheme::DyngmaAlg1 {
                Scheme::Asymptotic
            } else {
                Scheme::CholFree
            };
            let cfg = StepConfig::from_targets(pair.dt, spec.h_target, spec.inner_step, scheme)?;
            let mix = dyngma(
                sde,
                &GaussianComponent::point(&z),
                &cfg,
                rule,
                spec.component_cap,
            )?;
            mix.logpdf(&x)
        }
        LossScheme::EulerMaruyama => {
            let (mean, factor) = gauss_step(sde, &z, pair.dt, 1, Scheme::EulerMaruyama)?;
            gaussian_logpdf(&x, &mean, &factor)
        }
        LossScheme::GaussianCubature => {
            let n = ceil_tolerant(pair.dt / spec.cubature_substep).max(1);
            let (mean, cov) =
                gaussian_cubature_density(sde, &z, pair.dt, pair.dt / n as f64, rule)?;
            gaussian_logpdf(&x, &mean, &cholesky(&cov)?)
        }
    }
}

fn finite_or<R: Real>(v: R) -> Result<R> {
    if v.value().is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite("log-density is not finite".into()))
    }
}

/// `−(1/|batch|) Σ log p_h`.
pub fn nll_loss<R: Real>(
    batch: &[Pair],
    model: &ParameterizedSde,
    params: &[R],
    spec: &LossSpec,
) -> Result<R> {
    if batch.is_empty() {
        return Err(Error::EmptyInput);
    }
    let sde = model.bind(params);
    let rule = make_cubature(model.dim());
    let mut acc = params[0].lift(0.0);
    for p in batch {
        acc = acc - finite_or(pair_logpdf(&sde, params[0], p, spec, &rule)?)?;
    }
    Ok(acc / batch.len() as f64)
}

/// Sum over `γ ∈ Γ` of the per-γ mean negative log-likelihood.
pub fn multistep_nll<R: Real>(
    data: &Dataset,
    model: &ParameterizedSde,
    params: &[R],
    spec: &LossSpec,
) -> Result<R> {
    spec.validate()?;
    let mut acc = params[0].lift(0.0);
    for &g in &spec.gammas {
        let pairs = dataset_pairs(data, g);
        if pairs.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "no trajectory holds a γ = {g} pair"
            )));
        }
        acc = acc + nll_loss(&pairs, model, params, spec)?;
    }
    Ok(acc)
}

/// Bias-corrected Adam.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn step(&mut self, theta: &mut [f64], grad: &[f64], lr: f64) -> Result<()> {
        if theta.len() != self.m.len() || grad.len() != self.m.len() {
            return Err(Error::ShapeMismatch {
                expected: self.m.len(),
                got: if theta.len() != self.m.len() {
                    theta.len()
                } else {
                    grad.len()
                },
            });
        }
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..theta.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            theta[i] -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + self.eps);
        }
        Ok(())
    }
}

/// Log-linear decay from `lr_start` to `lr_end`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub lr_start: f64,
    pub lr_end: f64,
    pub total_epochs: usize,
}

impl Schedule {
    pub fn lr_at(&self, epoch: usize) -> Result<f64> {
        if epoch >= self.total_epochs {
            return Err(Error::OutOfRange(format!(
                "epoch {epoch} of {}",
                self.total_epochs
            )));
        }
        if epoch == 0 || self.total_epochs == 1 {
            return Ok(self.lr_start);
        }
        if epoch == self.total_epochs - 1 {
            return Ok(self.lr_end);
        }
        let (a, b) = (self.lr_start.log10(), self.lr_end.log10());
        Ok(10f64.powf(a + (b - a) * epoch as f64 / (self.total_epochs - 1) as f64))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Pairs per update; 0 means full batch.
    #[serde(default)]
    pub batch_size: usize,
    pub lr_start: f64,
    pub lr_end: f64,
    #[serde(default)]
    pub seed: u64,
    pub loss: LossSpec,
    /// Pairs per parallel work unit; reductions follow chunk order.
    #[serde(default = "default_chunk")]
    pub chunk_size: usize,
    #[serde(skip)]
    pub checkpoint: Option<PathBuf>,
}

fn default_chunk() -> usize {
    64
}

impl TrainConfig {
    pub fn new(
        epochs: usize,
        batch_size: usize,
        lr_start: f64,
        lr_end: f64,
        loss: LossSpec,
    ) -> Self {
        Self {
            epochs,
            batch_size,
            lr_start,
            lr_end,
            seed: 0,
            loss,
            chunk_size: default_chunk(),
            checkpoint: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        if !(self.lr_start >= self.lr_end && self.lr_end > 0.0) {
            return Err(Error::InvalidArgument("need lr_start ≥ lr_end > 0".into()));
        }
        if self.chunk_size == 0 {
            return Err(Error::InvalidArgument("chunk_size must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub loss: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub params: ParameterVector,
    pub history: Vec<EpochRecord>,
    pub skipped_batches: usize,
}

impl TrainOutcome {
    pub fn history_csv(&self) -> String {
        let mut s = String::from("epoch,lr,loss\n");
        for r in &self.history {
            s.push_str(&format!(
                "{},{},{}\n",
                r.epoch,
                crate::simulate::fmt_real(r.lr),
                crate::simulate::fmt_real(r.loss)
            ));
        }
        s
    }
}

/// A pair with its loss weight `1 / |P_γ|`.
#[derive(Clone, Debug)]
struct Weighted {
    pair: Pair,
    weight: f64,
}

fn recoverable(e: &Error) -> bool {
    matches!(
        e,
        Error::NonFinite(_)
            | Error::DegenerateComponent { .. }
            | Error::NonPositiveDefinite { .. }
            | Error::Degenerate { .. }
    )
}

thread_local! {
    static CHUNK_TAPE: std::cell::RefCell<Tape> = std::cell::RefCell::new(Tape::new());
}

/// `Σ term(θ, item)` and its gradient.
///
/// Items are split into fixed chunks, each summed on its own tape with one
/// reverse sweep; chunk results are added in index order, so the value does
/// not depend on the worker count.
pub(crate) fn reduce_terms<T: Sync>(
    items: &[T],
    theta: &[f64],
    chunk: usize,
    term: &(dyn for<'t> Fn(&[Var<'t>], &T) -> Result<Var<'t>> + Sync),
) -> Result<(f64, Vec<f64>)> {
    let n = theta.len();
    let parts: Vec<Result<(f64, Vec<f64>)>> = items
        .par_chunks(chunk.max(1))
        .map(|chunk| {
            CHUNK_TAPE.with(|cell| {
                let mut guard = cell.borrow_mut();
                guard.clear();
                let tape: &Tape = &guard;
                let vars = tape.leaves(theta);
                let mut terms = Vec::with_capacity(chunk.len());
                for item in chunk {
                    terms.push(term(&vars, item)?);
                }
                let zero = vars[0].lift(0.0);
                let out = terms.into_iter().fold(zero, |a, t| a + t);
                if !out.is_recorded() {
                    return Ok((out.value(), vec![0.0; n]));
                }
                let adj = tape.adjoints(out)?;
                Ok((out.value(), adj[..n].to_vec()))
            })
        })
        .collect();
    let mut total = 0.0;
    let mut grad = vec![0.0; n];
    for p in parts {
        let (l, g) = p?;
        total += l;
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
    }
    if !total.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("loss or gradient".into()));
    }
    Ok((total, grad))
}

fn loss_and_grad(
    items: &[&Weighted],
    model: &ParameterizedSde,
    theta: &[f64],
    spec: &LossSpec,
    chunk: usize,
) -> Result<(f64, Vec<f64>)> {
    let rule = make_cubature(model.dim());
    reduce_terms(items, theta, chunk, &|vars, w| {
        let sde: BoundSde<'_, _> = model.bind(vars);
        let lp = finite_or(pair_logpdf(&sde, vars[0], &w.pair, spec, &rule)?)?;
        Ok(lp * -w.weight)
    })
}

/// Loss value and gradient of [`multistep_nll`] at `theta`.
pub fn multistep_loss_and_grad(
    data: &Dataset,
    model: &ParameterizedSde,
    theta: &[f64],
    spec: &LossSpec,
) -> Result<(f64, Vec<f64>)> {
    let items = weighted_pairs(data, spec)?;
    let refs: Vec<&Weighted> = items.iter().collect();
    loss_and_grad(&refs, model, theta, spec, default_chunk())
}

fn weighted_pairs(data: &Dataset, spec: &LossSpec) -> Result<Vec<Weighted>> {
    spec.validate()?;
    let mut items = Vec::new();
    for &g in &spec.gammas {
        let pairs = dataset_pairs(data, g);
        if pairs.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "no trajectory holds a γ = {g} pair"
            )));
        }
        let w = 1.0 / pairs.len() as f64;
        items.extend(pairs.into_iter().map(|pair| Weighted { pair, weight: w }));
    }
    Ok(items)
}

/// Minibatch Adam on the multi-step loss.
///
/// Each minibatch loss is scaled so that its expectation is the full loss.
/// Batches whose loss or gradient is not finite are skipped; three such
/// epochs in a row abort the run.
pub fn train(
    data: &Dataset,
    model: &ParameterizedSde,
    init: ParameterVector,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.dim != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            got: data.dim,
        });
    }
    if init.len() != model.n_params() {
        return Err(Error::ShapeMismatch {
            expected: model.n_params(),
            got: init.len(),
        });
    }
    let items = weighted_pairs(data, &cfg.loss)?;
    let schedule = Schedule {
        lr_start: cfg.lr_start,
        lr_end: cfg.lr_end,
        total_epochs: cfg.epochs,
    };
    let mut params = init;
    let mut adam = AdamState::new(params.len());
    let mut rng = RngStream::new(cfg.seed);
    let mut order: Vec<usize> = (0..items.len()).collect();
    let batch = if cfg.batch_size == 0 {
        items.len()
    } else {
        cfg.batch_size.min(items.len())
    };
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut bad_epochs = 0;
    let mut skipped = 0;
    for epoch in 0..cfg.epochs {
        let lr = schedule.lr_at(epoch)?;
        if batch < items.len() {
            order.shuffle(&mut rng);
        }
        let mut sum = 0.0;
        let mut good = 0usize;
        for idx in order.chunks(batch) {
            if idx.len() < batch && good > 0 {
                // ragged tail would change the estimator's scale
                continue;
            }
            let refs: Vec<&Weighted> = idx.iter().map(|&i| &items[i]).collect();
            let s = items.len() as f64 / idx.len() as f64;
            match loss_and_grad(&refs, model, &params.values, &cfg.loss, cfg.chunk_size) {
                Ok((l, mut g)) => {
                    g.iter_mut().for_each(|v| *v *= s);
                    adam.step(&mut params.values, &g, lr)?;
                    sum += l * s;
                    good += 1;
                }
                Err(e) if recoverable(&e) => skipped += 1,
                Err(e) => return Err(e),
            }
        }
        let loss = if good > 0 {
            sum / good as f64
        } else {
            f64::NAN
        };
        history.push(EpochRecord { epoch, lr, loss });
        if good == 0 {
            bad_epochs += 1;
            if bad_epochs >= 3 {
                return Err(Error::TrainingDiverged {
                    epoch,
                    epochs: cfg.epochs,
                });
            }
        } else {
            bad_epochs = 0;
        }
    }
    if let Some(path) = &cfg.checkpoint {
        params.save(path)?;
    }
    Ok(TrainOutcome {
        params,
        history,
        skipped_batches: skipped,
    })
}
