//! Trains one model per loss scheme on the same simulated data and prints
//! the drift and diffusion errors of each.
//!
//! `cargo run --release --example compare_losses -- [config.toml] [seed] [scheme,scheme,...]`
//!
//! Defaults: the Beneš preset, seed 0, the config's own scheme against
//! `euler_maruyama`.

use std::time::Instant;

use dyngma::experiment::{run_evaluate, run_generate, run_train, ExperimentConfig};
use dyngma::train::LossScheme;

fn parse_scheme(s: &str) -> Result<LossScheme, String> {
    match s {
        "dyngma_alg1" => Ok(LossScheme::DyngmaAlg1),
        "dyngma_alg2" => Ok(LossScheme::DyngmaAlg2),
        "euler_maruyama" => Ok(LossScheme::EulerMaruyama),
        "gaussian_cubature" => Ok(LossScheme::GaussianCubature),
        _ => Err(format!("unknown scheme {s:?}")),
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let path = args
        .next()
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/configs/benes.toml").into());
    let seed: u64 = args.next().map_or(Ok(0), |s| s.parse())?;
    let cfg = ExperimentConfig::load(path.as_ref())?.with_seed(seed);
    let own = cfg
        .train
        .as_ref()
        .ok_or("config has no [train] section")?
        .loss
        .scheme;
    let schemes = match args.next() {
        Some(list) => list
            .split(',')
            .map(parse_scheme)
            .collect::<Result<Vec<_>, _>>()?,
        None => vec![own, LossScheme::EulerMaruyama],
    };
    let dir = tempfile::tempdir()?;
    let data = run_generate(&cfg, dir.path())?;
    println!(
        "{}: {} trajectories, {} states, dt = {}",
        cfg.benchmark.name(),
        data.trajectories.len(),
        data.n_points(),
        data.meta.dt
    );
    for scheme in schemes {
        let mut c = cfg.clone();
        if let Some(t) = c.train.as_mut() {
            t.loss.scheme = scheme;
        }
        let t = Instant::now();
        let out = run_train(&c, &data, dir.path())?;
        let m = run_evaluate(&c, &out.params, dir.path())?;
        println!(
            "{:>18}: e_f {:.4e}  e_sigma {:.4e}  final loss {:.5e}  ({:.1?})",
            scheme.name(),
            m.e_f,
            m.e_sigma,
            out.history.last().map_or(f64::NAN, |r| r.loss),
            t.elapsed()
        );
    }
    Ok(())
}
