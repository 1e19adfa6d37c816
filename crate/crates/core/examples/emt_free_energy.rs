//! Free-energy surfaces of the ten-gene EMT network over gene pairs, from
//! one long Monte Carlo chain. Writes `free_energy_i_j.csv` files.
//!
//! `cargo run --release --example emt_free_energy -- [out_dir]`

use dyngma::experiment::{run_invariant, ExperimentConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/configs/emt.toml");
    let cfg = ExperimentConfig::load(path.as_ref())?;
    let tmp = tempfile::tempdir()?;
    let out = std::env::args()
        .nth(1)
        .map_or_else(|| tmp.path().to_path_buf(), Into::into);
    run_invariant(&cfg, &out)?;
    for (i, j) in &cfg.invariant.as_ref().unwrap().marginals {
        let file = out.join(format!("free_energy_{i}_{j}.csv"));
        let text = std::fs::read_to_string(&file)?;
        let (mut lo, mut empty) = (f64::INFINITY, 0);
        for line in text.lines().skip(1) {
            let cols: Vec<&str> = line.split(',').collect();
            if cols[3] == "1" {
                empty += 1;
            } else {
                lo = lo.min(cols[2].parse::<f64>()?);
            }
        }
        println!(
            "genes ({i}, {j}): min free energy {lo:.3}, {empty} empty cells -> {}",
            file.display()
        );
    }
    Ok(())
}
