//! Config-driven runs: generate → train → evaluate, plus the density,
//! invariant and SSA pipelines. Every stage writes CSV or the binary
//! formats into an output directory.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::autodiff::ParameterVector;
use crate::density::{
    dyngma, gauss_step, make_cubature, GaussianComponent, Scheme, StepConfig, DEFAULT_COMPONENT_CAP,
};
use crate::error::{Error, Result};
use crate::invariant::{
    free_energy, mc_samples, train_potential, uniform_edges, HistogramGrid, McConfig,
    PotentialModel, PotentialTrainConfig,
};
use crate::linalg::gaussian_logpdf;
use crate::metrics::{relative_error_scalar, sample_box, Metrics};
use crate::sde::{benes_exact_density, Benchmark, DiffusionKind, ParameterizedSde, SdeModel};
use crate::simulate::{
    apply_measurement_noise, fmt_real, generate_dataset, ssa_dataset, Dataset, RngStream, SsaConfig,
};
use crate::train::{train, TrainConfig, TrainOutcome};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_metric_points")]
    pub metric_points: usize,
    #[serde(default = "default_metric_seed")]
    pub metric_seed: u64,
}

fn default_name() -> String {
    "run".into()
}
fn default_metric_points() -> usize {
    10_000
}
fn default_metric_seed() -> u64 {
    0x6d65_7472
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            name: default_name(),
            seed: 0,
            metric_points: default_metric_points(),
            metric_seed: default_metric_seed(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub n_trajectories: usize,
    /// Records after the initial state.
    pub steps: usize,
    pub dt: f64,
    pub substep: f64,
    #[serde(default)]
    pub burn_in: f64,
    /// Multiplicative uniform noise intensity.
    #[serde(default)]
    pub measurement_noise: f64,
    /// Overrides the benchmark's sampling box.
    #[serde(default)]
    pub domain: Option<Vec<(f64, f64)>>,
    /// Load this binary dataset instead of simulating.
    #[serde(default)]
    pub path: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub drift_hidden: Vec<usize>,
    pub diffusion: DiffusionKind,
    #[serde(default)]
    pub diffusion_hidden: Vec<usize>,
}

impl ModelConfig {
    pub fn build(&self, dim: usize) -> ParameterizedSde {
        ParameterizedSde::new(
            dim,
            &self.drift_hidden,
            self.diffusion,
            &self.diffusion_hidden,
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensityConfig {
    pub x0: f64,
    pub t: f64,
    pub h: f64,
    #[serde(default = "default_inner")]
    pub inner_step: f64,
    pub grid: (f64, f64, usize),
}

fn yes() -> bool {
    true
}

fn default_inner() -> f64 {
    0.25
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InvariantSection {
    /// Sample the trained model instead of the benchmark itself.
    #[serde(default)]
    pub learned: bool,
    pub mc: McConfig,
    /// `(lo, hi, bins)` per coordinate.
    pub bins: Vec<(f64, f64, usize)>,
    /// Build the full joint histogram; off for high dimensions, where only
    /// the free-energy marginals are useful.
    #[serde(default = "yes")]
    pub joint: bool,
    /// Free-energy marginals to emit.
    #[serde(default)]
    pub marginals: Vec<(usize, usize)>,
    #[serde(default)]
    pub potential: Option<PotentialSection>,
}

const MAX_JOINT_CELLS: usize = 10_000_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSection {
    pub hidden: Vec<usize>,
    pub n_points: usize,
    pub train: PotentialTrainConfig,
    /// `(lo, hi, n)` per coordinate of the evaluation grid.
    pub grid: Vec<(f64, f64, usize)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SsaSection {
    pub network: SsaConfig,
    pub y1: f64,
    pub y2: f64,
    pub n_trajectories: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub run: RunSection,
    pub benchmark: Benchmark,
    #[serde(default)]
    pub data: Option<DataConfig>,
    #[serde(default)]
    pub model: Option<ModelConfig>,
    #[serde(default)]
    pub train: Option<TrainConfig>,
    #[serde(default)]
    pub density: Option<DensityConfig>,
    #[serde(default)]
    pub invariant: Option<InvariantSection>,
    #[serde(default)]
    pub ssa: Option<SsaSection>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let dim = self.benchmark.dimension();
        if let Some(d) = &self.data {
            if d.path.is_none() {
                if d.n_trajectories == 0 || d.steps == 0 {
                    return bad("data needs at least one trajectory and one step".into());
                }
                crate::simulate::steps_per_record(d.dt, d.substep)
                    .map_err(|e| Error::Config(format!("data: {e}")))?;
            }
            if let Some(dom) = &d.domain {
                if dom.len() != dim || dom.iter().any(|(lo, hi)| !(hi > lo)) {
                    return bad(format!("data.domain must hold {dim} increasing intervals"));
                }
            }
            if !(d.measurement_noise >= 0.0) {
                return bad("data.measurement_noise must be nonnegative".into());
            }
        }
        if let Some(t) = &self.train {
            t.validate()
                .map_err(|e| Error::Config(format!("train: {e}")))?;
            if self.model.is_none() || self.data.is_none() {
                return bad("train needs [model] and [data]".into());
            }
        }
        if let Some(m) = &self.model {
            if let Some(t) = &self.train {
                if t.loss.scheme == crate::train::LossScheme::DyngmaAlg2
                    && m.diffusion == DiffusionKind::ConstantFull
                {
                    return bad("dyngma_alg2 needs a triangular diffusion parameterization".into());
                }
            }
        }
        if let Some(d) = &self.density {
            if dim != 1 {
                return bad("density grids are 1-d only".into());
            }
            if !(d.t > 0.0 && d.h > 0.0 && d.inner_step > 0.0)
                || d.grid.2 < 2
                || !(d.grid.1 > d.grid.0)
            {
                return bad("density: positive times and a nondegenerate grid required".into());
            }
        }
        if let Some(inv) = &self.invariant {
            if inv.mc.x0.len() != dim || inv.bins.len() != dim {
                return bad(format!("invariant: x0 and bins need {dim} entries"));
            }
            let cells = inv
                .bins
                .iter()
                .try_fold(1usize, |acc, b| acc.checked_mul(b.2));
            if inv.joint && cells.is_none_or(|c| c > MAX_JOINT_CELLS) {
                return bad(format!(
                    "invariant: joint histogram exceeds {MAX_JOINT_CELLS} cells; set joint = false"
                ));
            }
            if !inv.joint
                && inv.potential.is_some()
                && analytic_potential(&self.benchmark).is_none()
            {
                return bad(
                    "invariant.potential needs the joint histogram as its reference".into(),
                );
            }
            if inv.learned && self.model.is_none() {
                return bad("invariant.learned needs [model]".into());
            }
            for &(i, j) in &inv.marginals {
                if i >= dim || j >= dim || i == j {
                    return bad(format!("invariant marginal ({i}, {j}) invalid"));
                }
            }
            if let Some(p) = &inv.potential {
                if p.grid.len() != dim || p.n_points == 0 {
                    return bad(
                        "invariant.potential: one grid axis per coordinate and n_points > 0".into(),
                    );
                }
            }
        }
        if let Some(s) = &self.ssa {
            s.network
                .validate()
                .map_err(|e| Error::Config(format!("ssa: {e}")))?;
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.run.seed = seed;
        self
    }

    fn domain(&self) -> Vec<(f64, f64)> {
        self.data
            .as_ref()
            .and_then(|d| d.domain.clone())
            .unwrap_or_else(|| self.benchmark.domain_box())
    }
}

/// An error tagged with the pipeline stage that raised it.
#[derive(Debug)]
pub struct StageError {
    pub stage: &'static str,
    pub source: Error,
}

impl fmt::Display for StageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} failed: {}", self.stage, self.source)
    }
}

impl std::error::Error for StageError {}

pub type StageResult<T> = std::result::Result<T, StageError>;

trait AtStage<T> {
    fn at(self, stage: &'static str) -> StageResult<T>;
}

impl<T> AtStage<T> for Result<T> {
    fn at(self, stage: &'static str) -> StageResult<T> {
        self.map_err(|source| StageError { stage, source })
    }
}

fn require<'a, T>(v: &'a Option<T>, what: &str) -> Result<&'a T> {
    v.as_ref()
        .ok_or_else(|| Error::Config(format!("missing [{what}] section")))
}

fn ensure_dir(out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)?;
    Ok(())
}

/// Simulated (or loaded) training data, with measurement noise applied.
pub fn run_generate(cfg: &ExperimentConfig, out: &Path) -> StageResult<Dataset> {
    let go = || -> Result<Dataset> {
        let d = require(&cfg.data, "data")?;
        ensure_dir(out)?;
        let clean = match &d.path {
            Some(p) => Dataset::load_binary(p)?,
            None => generate_dataset(
                &cfg.benchmark,
                cfg.benchmark.name(),
                &cfg.domain(),
                d.n_trajectories,
                d.steps,
                d.dt,
                d.substep,
                d.burn_in,
                cfg.run.seed,
            )?,
        };
        let data = if d.measurement_noise > 0.0 {
            let mut rng = RngStream::substream(cfg.run.seed, u64::MAX);
            apply_measurement_noise(&clean, d.measurement_noise, &mut rng)
        } else {
            clean
        };
        data.save_binary(&out.join("dataset.bin"))?;
        data.save_csv(&out.join("dataset.csv"))?;
        Ok(data)
    };
    go().at("simulate")
}

/// Trains on `data`, writing the checkpoint and loss history.
pub fn run_train(cfg: &ExperimentConfig, data: &Dataset, out: &Path) -> StageResult<TrainOutcome> {
    let go = || -> Result<TrainOutcome> {
        let m = require(&cfg.model, "model")?;
        let mut t = require(&cfg.train, "train")?.clone();
        t.seed = cfg.run.seed;
        t.checkpoint = Some(out.join("checkpoint.bin"));
        ensure_dir(out)?;
        let model = m.build(data.dim);
        let init = model.init(&mut RngStream::substream(cfg.run.seed, 1));
        let outcome = train(data, &model, init, &t)?;
        std::fs::write(out.join("loss_history.csv"), outcome.history_csv())?;
        Ok(outcome)
    };
    go().at("train")
}

/// `e_f`, `e_σ` of a checkpoint against the benchmark system.
pub fn run_evaluate(
    cfg: &ExperimentConfig,
    params: &ParameterVector,
    out: &Path,
) -> StageResult<Metrics> {
    let go = || -> Result<Metrics> {
        let m = require(&cfg.model, "model")?;
        let model = m.build(cfg.benchmark.dimension());
        if params.len() != model.n_params() {
            return Err(Error::ShapeMismatch {
                expected: model.n_params(),
                got: params.len(),
            });
        }
        let learned = model.bind(&params.values);
        let metrics = Metrics::evaluate(
            &learned,
            &cfg.benchmark,
            &cfg.domain(),
            cfg.run.metric_points,
            cfg.run.metric_seed,
        )?;
        ensure_dir(out)?;
        std::fs::write(out.join("metrics.csv"), metrics.to_csv())?;
        Ok(metrics)
    };
    go().at("evaluate")
}

#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    pub metrics: Metrics,
    pub final_loss: f64,
    pub epochs: usize,
}

/// Generate → train → evaluate.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path) -> StageResult<Report> {
    let data = run_generate(cfg, out)?;
    let outcome = run_train(cfg, &data, out)?;
    let metrics = run_evaluate(cfg, &outcome.params, out)?;
    Ok(Report {
        metrics,
        final_loss: outcome.history.last().map_or(f64::NAN, |r| r.loss),
        epochs: outcome.history.len(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct DensityRow {
    pub x: f64,
    pub exact: Option<f64>,
    pub em: f64,
    pub dyngma: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DensityReport {
    pub rows: Vec<DensityRow>,
    /// `e_P` of `(dyngma, em)` against the exact density on the grid.
    pub e_p: Option<(f64, f64)>,
}

/// 1-d transition densities on a grid: DynGMA, one-step Euler-Maruyama
/// and the exact density when the benchmark has one.
pub fn run_density(cfg: &ExperimentConfig, out: &Path) -> StageResult<DensityReport> {
    let go = || -> Result<DensityReport> {
        let d = require(&cfg.density, "density")?;
        let sde = &cfg.benchmark;
        let rule = make_cubature(1);
        let step = StepConfig::from_targets(d.t, d.h, d.inner_step, Scheme::Asymptotic)?;
        let mix = dyngma(
            sde,
            &GaussianComponent::point(&[d.x0]),
            &step,
            &rule,
            DEFAULT_COMPONENT_CAP,
        )?;
        let (mean, factor) = gauss_step(sde, &[d.x0], d.t, 1, Scheme::EulerMaruyama)?;
        let (lo, hi, n) = d.grid;
        let mut rows = Vec::with_capacity(n);
        let mut s = String::from("x,exact_density,em_density,dyngma_density\n");
        for k in 0..n {
            let x = lo + (hi - lo) * k as f64 / (n - 1) as f64;
            let exact = match sde {
                Benchmark::Benes { noise } if *noise == 1.0 => {
                    Some(benes_exact_density(d.t, x, d.x0)?)
                }
                _ => None,
            };
            let row = DensityRow {
                x,
                exact,
                em: gaussian_logpdf(&[x], &mean, &factor)?.exp(),
                dyngma: mix.logpdf(&[x])?.exp(),
            };
            s.push_str(&format!(
                "{},{},{},{}\n",
                fmt_real(x),
                exact.map_or_else(|| "nan".into(), fmt_real),
                fmt_real(row.em),
                fmt_real(row.dyngma)
            ));
            rows.push(row);
        }
        let e_p = match rows.iter().map(|r| r.exact).collect::<Option<Vec<f64>>>() {
            Some(exact) => {
                let dy: Vec<f64> = rows.iter().map(|r| r.dyngma).collect();
                let em: Vec<f64> = rows.iter().map(|r| r.em).collect();
                Some((
                    relative_error_scalar(&dy, &exact)?,
                    relative_error_scalar(&em, &exact)?,
                ))
            }
            None => None,
        };
        ensure_dir(out)?;
        std::fs::write(out.join("density.csv"), s)?;
        Ok(DensityReport { rows, e_p })
    };
    go().at("density")
}

#[derive(Clone, Debug, PartialEq)]
pub struct InvariantReport {
    pub histogram: Option<HistogramGrid>,
    /// Residual-method potential against the reference potential.
    pub e_v: Option<f64>,
    /// Learned-model histogram against the true system's histogram.
    pub e_p: Option<f64>,
}

/// Monte Carlo invariant histogram, free-energy marginals and optionally
/// the residual-method potential.
///
/// The reference potential is analytic where the benchmark has one and
/// `−ε̂ log p̂` of the histogram on occupied cells otherwise.
pub fn run_invariant(cfg: &ExperimentConfig, out: &Path) -> StageResult<InvariantReport> {
    let go = || -> Result<InvariantReport> {
        let inv = require(&cfg.invariant, "invariant")?;
        ensure_dir(out)?;
        let report = if inv.learned {
            let m = require(&cfg.model, "model")?;
            let model = m.build(cfg.benchmark.dimension());
            let params = ParameterVector::load(&out.join("checkpoint.bin"))?;
            if params.len() != model.n_params() {
                return Err(Error::ShapeMismatch {
                    expected: model.n_params(),
                    got: params.len(),
                });
            }
            let mut r = invariant_with(cfg, inv, &model.bind(&params.values), out)?;
            if let Some(h) = &r.histogram {
                let truth = mc_histogram(&cfg.benchmark, inv, cfg.run.seed)?
                    .0
                    .expect("joint histogram");
                r.e_p = Some(relative_error_scalar(&h.density(), &truth.density())?);
            }
            r
        } else {
            invariant_with(cfg, inv, &cfg.benchmark, out)?
        };
        let mut s = String::from("metric,value\n");
        for (k, v) in [("e_v", report.e_v), ("e_p", report.e_p)] {
            if let Some(v) = v {
                s.push_str(&format!("{k},{}\n", fmt_real(v)));
            }
        }
        std::fs::write(out.join("invariant_metrics.csv"), s)?;
        Ok(report)
    };
    go().at("invariant")
}

fn mc_histogram(
    sde: &dyn SdeModel<f64>,
    inv: &InvariantSection,
    seed: u64,
) -> Result<(Option<HistogramGrid>, Vec<Vec<f64>>)> {
    let samples = mc_samples(sde, &inv.mc, &mut RngStream::substream(seed, 2))?;
    let hist = if inv.joint {
        let edges = inv
            .bins
            .iter()
            .map(|&(lo, hi, n)| uniform_edges(lo, hi, n))
            .collect();
        Some(HistogramGrid::from_samples(
            edges,
            samples.iter().map(Vec::as_slice),
        )?)
    } else {
        None
    };
    Ok((hist, samples))
}

fn invariant_with(
    cfg: &ExperimentConfig,
    inv: &InvariantSection,
    sde: &dyn SdeModel<f64>,
    out: &Path,
) -> Result<InvariantReport> {
    let (histogram, samples) = mc_histogram(sde, inv, cfg.run.seed)?;
    if let Some(h) = &histogram {
        std::fs::write(out.join("invariant_histogram.csv"), h.to_csv())?;
    }
    for &(i, j) in &inv.marginals {
        let axis = |k: usize| uniform_edges(inv.bins[k].0, inv.bins[k].1, inv.bins[k].2);
        let fe = free_energy(&samples, &[i, j], vec![axis(i), axis(j)])?;
        std::fs::write(out.join(format!("free_energy_{i}_{j}.csv")), fe.to_csv())?;
    }
    let e_v = match &inv.potential {
        None => None,
        Some(p) => Some(potential_stage(cfg, sde, p, histogram.as_ref(), out)?),
    };
    Ok(InvariantReport {
        histogram,
        e_v,
        e_p: None,
    })
}

/// Generalized potential known in closed form.
fn analytic_potential(b: &Benchmark) -> Option<fn(&[f64]) -> f64> {
    match b {
        Benchmark::DoubleWell { .. } => Some(|x: &[f64]| (x[0] * x[0] - 1.0).powi(2)),
        _ => None,
    }
}

/// `(−ε̂ log p̂, V)` on occupied histogram cells.
fn histogram_potential(
    sde: &dyn SdeModel<f64>,
    points: &[Vec<f64>],
    hist: &HistogramGrid,
    trained: &crate::invariant::TrainedPotential,
    model: &PotentialModel,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let dim = sde.dim();
    let eps = sde.diffusion(&points[0])?.frobenius().powi(2) / 2.0;
    let dens = hist.density();
    let shape = hist.shape();
    let mut reference = Vec::new();
    let mut candidate = Vec::new();
    for (f, &q) in dens.iter().enumerate() {
        if q <= 0.0 {
            continue;
        }
        let mut rem = f;
        let mut x = vec![0.0; dim];
        for k in (0..dim).rev() {
            let i = rem % shape[k];
            rem /= shape[k];
            x[k] = 0.5 * (hist.edges[k][i] + hist.edges[k][i + 1]);
        }
        reference.push(-eps * q.ln());
        candidate.push(trained.potential(model, &x)?);
    }
    Ok((reference, candidate))
}

fn grid_points(axes: &[(f64, f64, usize)]) -> Vec<Vec<f64>> {
    let mut pts = vec![vec![]];
    for &(lo, hi, n) in axes {
        let vals: Vec<f64> = (0..n)
            .map(|k| {
                if n == 1 {
                    lo
                } else {
                    lo + (hi - lo) * k as f64 / (n - 1) as f64
                }
            })
            .collect();
        pts = pts
            .into_iter()
            .flat_map(|p| {
                vals.iter().map(move |&v| {
                    let mut q = p.clone();
                    q.push(v);
                    q
                })
            })
            .collect();
    }
    pts
}

fn potential_stage(
    cfg: &ExperimentConfig,
    sde: &dyn SdeModel<f64>,
    p: &PotentialSection,
    hist: Option<&HistogramGrid>,
    out: &Path,
) -> Result<f64> {
    let dim = sde.dim();
    let domain: Vec<(f64, f64)> = p.grid.iter().map(|&(lo, hi, _)| (lo, hi)).collect();
    let points = sample_box(&domain, p.n_points, cfg.run.seed ^ 0x706f_7465);
    let model = PotentialModel::new(dim, &p.hidden);
    let init = model.init(&mut RngStream::substream(cfg.run.seed, 3));
    let grid = grid_points(&p.grid);
    let trained = train_potential(sde, &points, &model, init, &p.train, &grid)?;
    trained.params.save(&out.join("potential.bin"))?;
    let mut s: String = (0..dim).map(|k| format!("x{k},")).collect();
    s.push_str("value\n");
    for x in &grid {
        for v in x {
            s.push_str(&fmt_real(*v));
            s.push(',');
        }
        s.push_str(&fmt_real(trained.potential(&model, x)?));
        s.push('\n');
    }
    std::fs::write(out.join("potential.csv"), s)?;
    let (reference, candidate) = match analytic_potential(&cfg.benchmark) {
        Some(u) => {
            let r: Vec<f64> = grid.iter().map(|x| u(x)).collect();
            let c = grid
                .iter()
                .map(|x| trained.potential(&model, x))
                .collect::<Result<Vec<_>>>()?;
            (r, c)
        }
        None => {
            let hist = hist.ok_or_else(|| {
                Error::Config("potential reference needs the joint histogram".into())
            })?;
            histogram_potential(sde, &points, hist, &trained, &model)?
        }
    };
    let lo = reference.iter().copied().fold(f64::INFINITY, f64::min);
    let lo_c = candidate.iter().copied().fold(f64::INFINITY, f64::min);
    let reference: Vec<f64> = reference.iter().map(|v| v - lo).collect();
    let candidate: Vec<f64> = candidate.iter().map(|v| v - lo_c).collect();
    relative_error_scalar(&candidate, &reference)
}

/// Gillespie trajectories of the SIR network.
pub fn run_ssa(cfg: &ExperimentConfig, out: &Path) -> StageResult<Dataset> {
    let go = || -> Result<Dataset> {
        let s = require(&cfg.ssa, "ssa")?;
        let data = ssa_dataset(&s.network, s.y1, s.y2, s.n_trajectories, cfg.run.seed)?;
        ensure_dir(out)?;
        data.save_binary(&out.join("ssa.bin"))?;
        data.save_csv(&out.join("ssa.csv"))?;
        Ok(data)
    };
    go().at("ssa")
}
