//! Diffusion error under 2% measurement noise for single-step and
//! eight-step DynGMA training on the 2-d system.
//!
//! `cargo run --release --example multistep_noise -- [seed]`

use dyngma::experiment::{run_evaluate, run_generate, run_train, ExperimentConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed: u64 = std::env::args().nth(1).map_or(Ok(0), |s| s.parse())?;
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/configs/two_dim_noisy.toml");
    let base = ExperimentConfig::load(path.as_ref())?.with_seed(seed);
    let dir = tempfile::tempdir()?;
    let data = run_generate(&base, dir.path())?;
    for gamma in [1, 8] {
        let mut cfg = base.clone();
        cfg.train.as_mut().unwrap().loss.gammas = vec![gamma];
        let out = run_train(&cfg, &data, dir.path())?;
        let m = run_evaluate(&cfg, &out.params, dir.path())?;
        println!(
            "Gamma = {{{gamma}}}: e_sigma {:.4e}, e_f {:.4e}",
            m.e_sigma, m.e_f
        );
    }
    Ok(())
}
