//! Ground-truth data: fine-step Euler-Maruyama paths, measurement noise,
//! Gillespie SSA for SIR/SIRS, and dataset persistence.

use std::io::{BufRead, Read, Write};
use std::path::Path;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::params::{read_u32, write_u32};
use crate::error::{Error, Result};
use crate::sde::{Benchmark, SdeModel};

/// Seeded generator; substreams are ChaCha stream ids under one key.
#[derive(Clone, Debug)]
pub struct RngStream(ChaCha8Rng);

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self(ChaCha8Rng::seed_from_u64(seed))
    }

    /// Independent stream `index` under `seed`, unaffected by how many
    /// other substreams exist.
    pub fn substream(seed: u64, index: u64) -> Self {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        r.set_stream(index);
        Self(r)
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.0)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.0.next_u32()
    }
    fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }
    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.0.fill_bytes(dst)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.times.len() != self.states.len() {
            return Err(Error::ShapeMismatch {
                expected: self.times.len(),
                got: self.states.len(),
            });
        }
        if self.states.iter().any(|s| s.len() != dim) {
            return Err(Error::Format("state of wrong dimension".into()));
        }
        if self.times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Format("times must be strictly increasing".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub benchmark: String,
    pub seed: u64,
    pub dt: f64,
    pub substep: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub dim: usize,
    pub trajectories: Vec<Trajectory>,
    pub meta: DatasetMeta,
}

impl Dataset {
    pub fn n_points(&self) -> usize {
        self.trajectories.iter().map(Trajectory::len).sum()
    }

    /// All recorded states, trajectory by trajectory.
    pub fn points(&self) -> impl Iterator<Item = &Vec<f64>> {
        self.trajectories.iter().flat_map(|t| t.states.iter())
    }
}

/// One Euler-Maruyama step in place.
pub fn em_step<M: SdeModel<f64> + ?Sized>(
    sde: &M,
    x: &mut [f64],
    substep: f64,
    rng: &mut RngStream,
) -> Result<()> {
    let f = sde.drift(x)?;
    let s = sde.diffusion(x)?;
    let eta: Vec<f64> = (0..s.cols()).map(|_| rng.normal()).collect();
    let noise = s.matvec(&eta);
    let sq = substep.sqrt();
    for i in 0..x.len() {
        x[i] += substep * f[i] + sq * noise[i];
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!(
            "Euler-Maruyama state left the representable range: {x:?}"
        )));
    }
    Ok(())
}

/// `n_steps` steps from `x0`, recording every `record_every`-th state and the start.
pub fn em_path<M: SdeModel<f64> + ?Sized>(
    sde: &M,
    x0: &[f64],
    substep: f64,
    n_steps: usize,
    record_every: usize,
    rng: &mut RngStream,
) -> Result<Trajectory> {
    if !(substep > 0.0) {
        return Err(Error::NonpositiveTime(substep));
    }
    let every = record_every.max(1);
    let mut x = x0.to_vec();
    let mut tr = Trajectory {
        times: vec![0.0],
        states: vec![x.clone()],
    };
    for step in 1..=n_steps {
        em_step(sde, &mut x, substep, rng)?;
        if step % every == 0 {
            tr.times.push(step as f64 * substep);
            tr.states.push(x.clone());
        }
    }
    Ok(tr)
}

/// Every fine step of an Euler-Maruyama run.
pub fn em_simulate<M: SdeModel<f64> + ?Sized>(
    sde: &M,
    x0: &[f64],
    substep: f64,
    n_steps: usize,
    rng: &mut RngStream,
) -> Result<Trajectory> {
    em_path(sde, x0, substep, n_steps, 1, rng)
}

/// Number of fine steps per record, requiring `substep` to divide `dt`.
pub fn steps_per_record(dt: f64, substep: f64) -> Result<usize> {
    if !(dt > 0.0 && substep > 0.0) {
        return Err(Error::NonpositiveTime(dt.min(substep)));
    }
    let n = (dt / substep).round();
    if n < 1.0 || (n * substep - dt).abs() > 1e-9 * dt {
        return Err(Error::InvalidArgument(format!(
            "substep {substep} does not divide {dt}"
        )));
    }
    Ok(n as usize)
}

/// Uniform initial points on `domain`, then `m` records spaced `dt` apart.
///
/// Trajectory `i` draws from substream `i` of `seed`. With `burn_in > 0` the
/// path first runs that long and the clock restarts at the first record.
#[allow(clippy::too_many_arguments)]
pub fn generate_dataset<M: SdeModel<f64> + Sync + ?Sized>(
    sde: &M,
    name: &str,
    domain: &[(f64, f64)],
    n_traj: usize,
    m: usize,
    dt: f64,
    substep: f64,
    burn_in: f64,
    seed: u64,
) -> Result<Dataset> {
    let every = steps_per_record(dt, substep)?;
    let burn = (burn_in / substep).round() as usize;
    if domain.len() != sde.dim() {
        return Err(Error::DimensionMismatch {
            expected: sde.dim(),
            got: domain.len(),
        });
    }
    let trajectories = (0..n_traj)
        .into_par_iter()
        .map(|i| {
            let mut rng = RngStream::substream(seed, i as u64);
            let mut x: Vec<f64> = domain
                .iter()
                .map(|&(lo, hi)| rng.random_range(lo..=hi))
                .collect();
            for _ in 0..burn {
                em_step(sde, &mut x, substep, &mut rng)?;
            }
            em_path(sde, &x, substep, m * every, every, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        dim: sde.dim(),
        trajectories,
        meta: DatasetMeta {
            benchmark: name.to_string(),
            seed,
            dt,
            substep,
        },
    })
}

/// Benchmark dataset on the benchmark's own box.
pub fn generate_benchmark_dataset(
    bench: &Benchmark,
    n_traj: usize,
    m: usize,
    dt: f64,
    substep: f64,
    seed: u64,
) -> Result<Dataset> {
    generate_dataset(
        bench,
        bench.name(),
        &bench.domain_box(),
        n_traj,
        m,
        dt,
        substep,
        0.0,
        seed,
    )
}

/// Scales every coordinate by `1 + δ`, `δ ~ U[−intensity, intensity]`.
pub fn apply_measurement_noise(data: &Dataset, intensity: f64, rng: &mut RngStream) -> Dataset {
    assert!(intensity >= 0.0, "noise intensity must be nonnegative");
    let mut out = data.clone();
    if intensity == 0.0 {
        return out;
    }
    for tr in &mut out.trajectories {
        for s in &mut tr.states {
            for v in s.iter_mut() {
                *v *= 1.0 + rng.random_range(-intensity..=intensity);
            }
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SsaConfig {
    pub n: u64,
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub dt: f64,
    pub t_max: f64,
}

impl SsaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidArgument("population must be positive".into()));
        }
        if [self.k1, self.k2, self.k3].iter().any(|&k| !(k >= 0.0)) {
            return Err(Error::InvalidArgument("rates must be nonnegative".into()));
        }
        if !(self.dt > 0.0 && self.t_max > 0.0) {
            return Err(Error::NonpositiveTime(self.dt.min(self.t_max)));
        }
        Ok(())
    }
}

/// SSA with a callback after every event: `(time, [n0, n1, n2])`.
///
/// Initial counts are `round(N·y)`.
/// Records, for each grid time `iΔt ≤ t_max`, the state after the first event
/// at or after it, stamped with that event's time. When one event passes
/// several grid times only one record is made. The path is truncated once
/// the total propensity vanishes.
pub fn gillespie_ssa_with(
    cfg: &SsaConfig,
    y1_0: f64,
    y2_0: f64,
    rng: &mut RngStream,
    mut on_event: impl FnMut(f64, [u64; 3]),
) -> Result<Trajectory> {
    cfg.validate()?;
    if !(0.0..=1.0).contains(&y1_0) || !(0.0..=1.0).contains(&y2_0) || y1_0 + y2_0 > 1.0 + 1e-12 {
        return Err(Error::InvalidArgument(
            "initial concentrations outside the simplex".into(),
        ));
    }
    let nf = cfg.n as f64;
    let n1 = (y1_0 * nf).round() as u64;
    let n2 = (y2_0 * nf).round() as u64;
    if n1 + n2 > cfg.n {
        return Err(Error::InvalidArgument(
            "initial counts exceed the population".into(),
        ));
    }
    let mut n = [cfg.n - n1 - n2, n1, n2];
    let conc = |n: &[u64; 3]| vec![n[1] as f64 / nf, n[2] as f64 / nf];
    let n_grid = (cfg.t_max / cfg.dt + 1e-9).floor() as usize;
    let mut tr = Trajectory {
        times: vec![0.0],
        states: vec![conc(&n)],
    };
    let mut next_grid = 1usize;
    let mut t = 0.0;
    while next_grid <= n_grid {
        let a = [
            4.0 * cfg.k1 * n[0] as f64 * n[1] as f64 / nf,
            cfg.k2 * n[1] as f64,
            cfg.k3 * n[2] as f64,
        ];
        let a0 = a[0] + a[1] + a[2];
        if a0 <= 0.0 {
            break;
        }
        let tau: f64 = Exp1.sample(rng);
        t += tau / a0;
        let u = rng.random::<f64>() * a0;
        if u < a[0] {
            n[0] -= 1;
            n[1] += 1;
        } else if u < a[0] + a[1] || a[2] == 0.0 {
            n[1] -= 1;
            n[2] += 1;
        } else {
            n[2] -= 1;
            n[0] += 1;
        }
        on_event(t, n);
        if t >= next_grid as f64 * cfg.dt {
            tr.times.push(t);
            tr.states.push(conc(&n));
            while next_grid <= n_grid && t >= next_grid as f64 * cfg.dt {
                next_grid += 1;
            }
        }
    }
    Ok(tr)
}

pub fn gillespie_ssa(
    cfg: &SsaConfig,
    y1_0: f64,
    y2_0: f64,
    rng: &mut RngStream,
) -> Result<Trajectory> {
    gillespie_ssa_with(cfg, y1_0, y2_0, rng, |_, _| {})
}

/// `n_traj` SSA paths, path `i` on substream `i` of `seed`.
pub fn ssa_dataset(
    cfg: &SsaConfig,
    y1_0: f64,
    y2_0: f64,
    n_traj: usize,
    seed: u64,
) -> Result<Dataset> {
    let trajectories = (0..n_traj)
        .into_par_iter()
        .map(|i| gillespie_ssa(cfg, y1_0, y2_0, &mut RngStream::substream(seed, i as u64)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        dim: 2,
        trajectories,
        meta: DatasetMeta {
            benchmark: "ssa".into(),
            seed,
            dt: cfg.dt,
            substep: 0.0,
        },
    })
}

pub const DATASET_MAGIC: &[u8; 5] = b"DGDS1";

pub fn write_dataset_binary<W: Write>(data: &Dataset, mut w: W) -> Result<()> {
    w.write_all(DATASET_MAGIC)?;
    write_u32(&mut w, data.dim)?;
    write_u32(&mut w, data.trajectories.len())?;
    for tr in &data.trajectories {
        write_u32(&mut w, tr.len())?;
        for t in &tr.times {
            w.write_all(&t.to_le_bytes())?;
        }
        for s in &tr.states {
            for v in s {
                w.write_all(&v.to_le_bytes())?;
            }
        }
    }
    Ok(())
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

pub fn read_dataset_binary<R: Read>(mut r: R) -> Result<Dataset> {
    let mut magic = [0u8; 5];
    r.read_exact(&mut magic)?;
    if &magic != DATASET_MAGIC {
        return Err(Error::Format("bad dataset magic".into()));
    }
    let dim = read_u32(&mut r)?;
    let n_traj = read_u32(&mut r)?;
    let mut trajectories = Vec::with_capacity(n_traj);
    for _ in 0..n_traj {
        let len = read_u32(&mut r)?;
        let times = (0..len)
            .map(|_| read_f64(&mut r))
            .collect::<Result<Vec<_>>>()?;
        let states = (0..len)
            .map(|_| {
                (0..dim)
                    .map(|_| read_f64(&mut r))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        trajectories.push(Trajectory { times, states });
    }
    Ok(Dataset {
        dim,
        trajectories,
        meta: DatasetMeta::default(),
    })
}

/// Columns `traj_id, t, x_0 .. x_{D−1}`.
pub fn write_dataset_csv<W: Write>(data: &Dataset, mut w: W) -> Result<()> {
    let cols: Vec<String> = (0..data.dim).map(|i| format!("x_{i}")).collect();
    writeln!(w, "traj_id,t,{}", cols.join(","))?;
    for (id, tr) in data.trajectories.iter().enumerate() {
        for (t, s) in tr.times.iter().zip(&tr.states) {
            write!(w, "{id},{}", fmt_real(*t))?;
            for v in s {
                write!(w, ",{}", fmt_real(*v))?;
            }
            writeln!(w)?;
        }
    }
    Ok(())
}

pub fn read_dataset_csv<R: BufRead>(r: R) -> Result<Dataset> {
    let mut lines = r.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Format("empty dataset CSV".into()))??;
    let dim = header
        .split(',')
        .count()
        .checked_sub(2)
        .ok_or_else(|| Error::Format("dataset header too short".into()))?;
    let mut trajectories: Vec<Trajectory> = Vec::new();
    for (ln, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |what: &str| Error::Format(format!("line {}: {what}", ln + 2));
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != dim + 2 {
            return Err(bad("wrong column count"));
        }
        let id: usize = fields[0].parse().map_err(|_| bad("traj_id"))?;
        let nums = fields[1..]
            .iter()
            .map(|f| f.trim().parse::<f64>().map_err(|_| bad("number")))
            .collect::<Result<Vec<_>>>()?;
        if id == trajectories.len() {
            trajectories.push(Trajectory {
                times: Vec::new(),
                states: Vec::new(),
            });
        } else if id + 1 != trajectories.len() {
            return Err(bad("trajectories must be contiguous and ordered"));
        }
        let tr = trajectories.last_mut().expect("pushed above");
        tr.times.push(nums[0]);
        tr.states.push(nums[1..].to_vec());
    }
    Ok(Dataset {
        dim,
        trajectories,
        meta: DatasetMeta::default(),
    })
}

/// Shortest-exact 17-significant-digit rendering.
pub fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

impl Dataset {
    pub fn save_binary(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        write_dataset_binary(self, &mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load_binary(path: &Path) -> Result<Self> {
        read_dataset_binary(std::io::BufReader::new(std::fs::File::open(path)?))
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        write_dataset_csv(self, &mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        read_dataset_csv(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use crate::sde::{ou_exact_transition, LinearSde};
    use proptest::prelude::*;

    fn ou() -> LinearSde {
        LinearSde {
            a: Matrix::diag(&[-1.0]),
            b: Matrix::diag(&[0.5]),
        }
    }

    fn endpoint_stats(substep: f64, n: usize, seed: u64) -> (f64, f64) {
        let steps = (1.0 / substep).round() as usize;
        let ends: Vec<f64> = (0..n)
            .map(|i| {
                let mut rng = RngStream::substream(seed, i as u64);
                let mut x = vec![2.0];
                for _ in 0..steps {
                    em_step(&ou(), &mut x, substep, &mut rng).unwrap();
                }
                x[0]
            })
            .collect();
        let mean = ends.iter().sum::<f64>() / n as f64;
        let var = ends.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        (mean, var)
    }

    #[test]
    fn zero_noise_is_plain_euler() {
        let sde = LinearSde {
            a: Matrix::diag(&[-2.0]),
            b: Matrix::zeros(1, 1),
        };
        let tr = em_simulate(&sde, &[1.0], 0.1, 3, &mut RngStream::new(0)).unwrap();
        let expect = [1.0, 0.8, 0.64, 0.512];
        for (s, e) in tr.states.iter().zip(expect) {
            assert!((s[0] - e).abs() < 1e-15);
        }
        assert_eq!(tr.len(), 4);
    }

    #[test]
    fn ou_endpoint_statistics() {
        let n = 10_000;
        let (m_exact, v_exact) = ou_exact_transition(1.0, 0.5, 2.0, 1.0);
        for substep in [0.002, 0.001] {
            let (m, v) = endpoint_stats(substep, n, 9);
            let se_m = (v_exact / n as f64).sqrt();
            let se_v = v_exact * (2.0 / (n - 1) as f64).sqrt();
            // plus Euler bias of order substep
            assert!(
                (m - m_exact).abs() < 3.0 * se_m + 2.0 * substep,
                "{substep}: {m} vs {m_exact}"
            );
            assert!(
                (v - v_exact).abs() < 3.0 * se_v + substep,
                "{substep}: {v} vs {v_exact}"
            );
        }
    }

    #[test]
    fn non_finite_state_is_reported() {
        let sde = LinearSde {
            a: Matrix::diag(&[1e200]),
            b: Matrix::zeros(1, 1),
        };
        let err = em_simulate(&sde, &[1e200], 1.0, 2, &mut RngStream::new(1)).unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)));
    }

    #[test]
    fn dataset_shapes_and_boxes() {
        let b = Benchmark::TwoDim {};
        let d = generate_benchmark_dataset(&b, 5, 0, 0.1, 0.01, 3).unwrap();
        assert_eq!(d.n_points(), 5);
        let d = generate_benchmark_dataset(&b, 20, 4, 0.1, 0.01, 3).unwrap();
        for tr in &d.trajectories {
            assert_eq!(tr.len(), 5);
            tr.validate(2).unwrap();
            let s0 = &tr.states[0];
            assert!((-2.0..=2.0).contains(&s0[0]) && (-3.0..=3.0).contains(&s0[1]));
            assert!((tr.times[4] - 0.4).abs() < 1e-12);
        }
        assert!(generate_benchmark_dataset(&b, 1, 1, 0.1, 0.03, 3).is_err());
        let emt = generate_benchmark_dataset(&Benchmark::Emt {}, 50, 0, 0.04, 0.0005, 1).unwrap();
        assert!(emt.points().any(|p| p[6] > 2.0));
        assert!(emt.points().all(|p| p[0] <= 2.0 && p[6] <= 6.0));
    }

    #[test]
    fn trajectories_depend_only_on_their_index() {
        let b = Benchmark::TwoDim {};
        let small = generate_benchmark_dataset(&b, 3, 5, 0.1, 0.01, 42).unwrap();
        let large = generate_benchmark_dataset(&b, 8, 5, 0.1, 0.01, 42).unwrap();
        assert_eq!(small.trajectories[..], large.trajectories[..3]);
        let again = generate_benchmark_dataset(&b, 8, 5, 0.1, 0.01, 42).unwrap();
        assert_eq!(large, again);
    }

    #[test]
    fn measurement_noise_bounds() {
        let b = Benchmark::TwoDim {};
        let d = generate_benchmark_dataset(&b, 50, 4, 0.1, 0.01, 1).unwrap();
        assert_eq!(apply_measurement_noise(&d, 0.0, &mut RngStream::new(0)), d);
        let noisy = apply_measurement_noise(&d, 0.02, &mut RngStream::new(0));
        for (a, b) in d.points().zip(noisy.points()) {
            for (x, y) in a.iter().zip(b) {
                let delta = y / x - 1.0;
                assert!(delta.abs() <= 0.02 + 1e-12);
            }
        }
        assert_eq!(d.trajectories[3].times, noisy.trajectories[3].times);
    }

    #[test]
    fn measurement_noise_is_unbiased() {
        let y = 1.7;
        let data = Dataset {
            dim: 1,
            trajectories: vec![Trajectory {
                times: (0..20_000).map(|i| i as f64).collect(),
                states: vec![vec![y]; 20_000],
            }],
            meta: DatasetMeta::default(),
        };
        let noisy = apply_measurement_noise(&data, 0.04, &mut RngStream::new(5));
        let mean = noisy.points().map(|p| p[0]).sum::<f64>() / 20_000.0;
        // sd of y·δ is y·0.04/√3
        let se = y * 0.04 / 3f64.sqrt() / (20_000f64).sqrt();
        assert!((mean - y).abs() < 4.0 * se);
    }

    fn sir() -> SsaConfig {
        SsaConfig {
            n: 1024,
            k1: 1.0,
            k2: 1.0,
            k3: 0.0,
            dt: 0.05,
            t_max: 1.0,
        }
    }

    #[test]
    fn ssa_conserves_and_is_monotone_without_immunity_loss() {
        let mut rng = RngStream::new(4);
        let mut last_n0 = u64::MAX;
        let mut events = 0;
        let tr = gillespie_ssa_with(&sir(), 0.1, 0.0, &mut rng, |_, n| {
            assert_eq!(n.iter().sum::<u64>(), 1024);
            assert!(n[0] <= last_n0);
            last_n0 = n[0];
            events += 1;
        })
        .unwrap();
        assert!(events > 100);
        tr.validate(2).unwrap();
    }

    #[test]
    fn ssa_steps_are_variable() {
        // low initial infection makes the early waiting times long
        let cfg = sir();
        let mut trajectories = Vec::new();
        for (k, y1) in [0.1, 8.0 / 1024.0, 1.0 / 1024.0].into_iter().enumerate() {
            trajectories.extend(
                ssa_dataset(&cfg, y1, 0.0, 100, 11 + k as u64)
                    .unwrap()
                    .trajectories,
            );
        }
        let steps: Vec<f64> = trajectories
            .iter()
            .flat_map(|t| t.times.windows(2).map(|w| w[1] - w[0]).collect::<Vec<_>>())
            .collect();
        let mean = steps.iter().sum::<f64>() / steps.len() as f64;
        let var = steps.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / steps.len() as f64;
        assert!(var > 0.0);
        assert!(steps.iter().cloned().fold(0.0, f64::max) > 2.0 * cfg.dt);
        for tr in &trajectories {
            tr.validate(2).unwrap();
        }
    }

    #[test]
    fn ssa_absorbing_state_truncates() {
        let cfg = sir();
        let tr = gillespie_ssa(&cfg, 0.0, 0.0, &mut RngStream::new(0)).unwrap();
        assert_eq!(tr.len(), 1);
        assert!(gillespie_ssa(&cfg, 0.9, 0.2, &mut RngStream::new(0)).is_err());
    }

    #[test]
    fn binary_header_layout() {
        let d = Dataset {
            dim: 2,
            trajectories: vec![Trajectory {
                times: vec![0.0],
                states: vec![vec![1.0, 2.0]],
            }],
            meta: DatasetMeta::default(),
        };
        let mut buf = Vec::new();
        write_dataset_binary(&d, &mut buf).unwrap();
        assert_eq!(&buf[..5], b"DGDS1");
        assert_eq!(&buf[5..9], &2u32.to_le_bytes());
        assert_eq!(&buf[9..13], &1u32.to_le_bytes());
        assert_eq!(buf.len(), 13 + 4 + 8 * 3);
        assert!(read_dataset_binary(&b"DGDS0"[..]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn binary_and_csv_round_trip_exactly(
            trajs in proptest::collection::vec(
                proptest::collection::vec((any::<f64>(), any::<f64>(), any::<f64>()), 0..6), 0..4),
        ) {
            let data = Dataset {
                dim: 2,
                trajectories: trajs
                    .iter()
                    .map(|rows| Trajectory {
                        times: rows.iter().map(|r| r.0).collect(),
                        states: rows.iter().map(|r| vec![r.1, r.2]).collect(),
                    })
                    .collect(),
                meta: DatasetMeta::default(),
            };
            let mut buf = Vec::new();
            write_dataset_binary(&data, &mut buf).unwrap();
            let back = read_dataset_binary(&buf[..]).unwrap();
            prop_assert_eq!(back.trajectories.len(), data.trajectories.len());
            for (a, b) in data.trajectories.iter().zip(&back.trajectories) {
                for (x, y) in a.times.iter().zip(&b.times) {
                    prop_assert_eq!(x.to_bits(), y.to_bits());
                }
                for (x, y) in a.states.iter().flatten().zip(b.states.iter().flatten()) {
                    prop_assert_eq!(x.to_bits(), y.to_bits());
                }
            }
            // CSV keeps finite values exactly; empty trajectories have no rows
            let finite = data.points().flatten().chain(data.trajectories.iter().flat_map(|t| t.times.iter())).all(|v| v.is_finite());
            if finite && data.trajectories.iter().all(|t| !t.is_empty()) {
                let mut csv = Vec::new();
                write_dataset_csv(&data, &mut csv).unwrap();
                let back = read_dataset_csv(&csv[..]).unwrap();
                prop_assert_eq!(back.trajectories, data.trajectories);
            }
        }
    }
}
