//! Gillespie SIR paths against the mean-field equations, and the spread of
//! the recorded step sizes.
//!
//! `cargo run --release --example sir_ssa`

use dyngma::sde::{Benchmark, SdeModel};
use dyngma::simulate::{em_path, ssa_dataset, RngStream, SsaConfig};

fn main() -> dyngma::Result<()> {
    let cfg = SsaConfig {
        n: 1024,
        k1: 1.0,
        k2: 1.0,
        k3: 0.0,
        dt: 0.05,
        t_max: 1.0,
    };
    let data = ssa_dataset(&cfg, 0.1, 0.0, 2000, 3)?;
    let steps: Vec<f64> = data
        .trajectories
        .iter()
        .flat_map(|t| t.times.windows(2).map(|w| w[1] - w[0]))
        .collect();
    let mean = steps.iter().sum::<f64>() / steps.len() as f64;
    let max = steps.iter().copied().fold(0.0, f64::max);
    println!(
        "{} records; step mean {mean:.4}, max {max:.4} (nominal {})",
        steps.len(),
        cfg.dt
    );
    // mean-field trajectory: the same SDE with its noise switched off
    let mf = Benchmark::SirMeanField {
        k1: cfg.k1,
        k2: cfg.k2,
        k3: cfg.k3,
        n: f64::INFINITY,
    };
    let mut y = vec![102.0 / 1024.0, 0.0];
    let mut rng = RngStream::new(0);
    for t in [0.25, 0.5, 0.75, 1.0] {
        y = em_path(&mf, &y, 1e-4, 2500, 2500, &mut rng)?
            .states
            .pop()
            .unwrap();
        println!(
            "t = {t:.2}: mean-field y = ({:.4}, {:.4}), drift {:?}",
            y[0],
            y[1],
            mf.drift(&y)?
        );
    }
    Ok(())
}
