//! Generalized potential of the 2-d benchmark by residual minimization,
//! compared with the finite-volume FPK reference.
//!
//!     cargo run --release --example two_dim_potential -- [epochs]

use std::time::Instant;

use dyngma::invariant::{
    fpk_stationary_2d, train_potential, FpkConfig, PotentialModel, PotentialTrainConfig,
};
use dyngma::metrics::{relative_error_scalar, sample_box};
use dyngma::sde::Benchmark;
use dyngma::simulate::RngStream;

fn main() -> dyngma::Result<()> {
    let epochs: usize = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(400);
    let sde = Benchmark::TwoDim {};
    let domain = sde.domain_box();
    let reference = fpk_stationary_2d(&sde, [domain[0], domain[1]], &FpkConfig::default())?;
    let v_ref = reference.potential(0.11);

    let points = sample_box(&domain, 2000, 11);
    let model = PotentialModel::new(2, &[32, 32]);
    let init = model.init(&mut RngStream::new(3));
    let cfg = PotentialTrainConfig {
        epochs,
        batch_size: 200,
        lr_start: 1e-2,
        lr_end: 1e-4,
        seed: 0,
        drift_weight: 1.0,
        orthogonality_weight: 1.0,
    };
    // every 4th cell center of the reference grid
    let mut grid = Vec::new();
    let mut expected = Vec::new();
    for (i, x) in reference.xs.iter().enumerate().step_by(4) {
        for (j, y) in reference.ys.iter().enumerate().step_by(4) {
            grid.push(vec![*x, *y]);
            expected.push(v_ref[i * reference.ys.len() + j]);
        }
    }
    let start = Instant::now();
    let trained = train_potential(&sde, &points, &model, init, &cfg, &grid)?;
    let v: Vec<f64> = grid
        .iter()
        .map(|x| trained.potential(&model, x))
        .collect::<dyngma::Result<_>>()?;
    // both surfaces have minimum 0 on the grid
    let lo = expected.iter().copied().fold(f64::INFINITY, f64::min);
    let expected: Vec<f64> = expected.iter().map(|e| e - lo).collect();
    let e_v = relative_error_scalar(&v, &expected)?;
    let last = trained.history.last().map_or(f64::NAN, |r| r.loss);
    println!(
        "epochs {epochs}: final residual {last:.3e}, e_V = {e_v:.4}, {:.1?}",
        start.elapsed()
    );
    Ok(())
}
