//! Beneš transition density at x0 = 0.5, t = 2: DynGMA (h = 0.5, L = 2),
//! the single-step Euler-Maruyama Gaussian and the exact density.
//! Writes `density.csv` into the given directory (default: a temp dir).
//!
//! `cargo run --release --example benes_density -- [out_dir]`

use dyngma::experiment::{run_density, ExperimentConfig};
use dyngma::sde::Benchmark;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/configs/benes.toml");
    let mut cfg = ExperimentConfig::load(path.as_ref())?;
    // the closed form exists for unit noise
    cfg.benchmark = Benchmark::Benes { noise: 1.0 };
    let tmp = tempfile::tempdir()?;
    let out = std::env::args()
        .nth(1)
        .map_or_else(|| tmp.path().to_path_buf(), Into::into);
    let r = run_density(&cfg, &out)?;
    let dx = r.rows[1].x - r.rows[0].x;
    let l1 = |f: &dyn Fn(&dyngma::experiment::DensityRow) -> f64| -> f64 {
        r.rows
            .iter()
            .map(|row| (f(row) - row.exact.unwrap()).abs() * dx)
            .sum()
    };
    println!(
        "grid L1 to exact: dyngma {:.4e}, euler-maruyama {:.4e}",
        l1(&|r| r.dyngma),
        l1(&|r| r.em)
    );
    if let Some((dy, em)) = r.e_p {
        println!("relative e_P: dyngma {dy:.4e}, euler-maruyama {em:.4e}");
    }
    println!("wrote {}", out.join("density.csv").display());
    Ok(())
}
