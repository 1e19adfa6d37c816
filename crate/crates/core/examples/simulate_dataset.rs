//! Simulates a 2-d benchmark dataset and round-trips it through the binary
//! and CSV formats.
//!
//! `cargo run --release --example simulate_dataset -- [out_dir]`

use dyngma::sde::Benchmark;
use dyngma::simulate::{apply_measurement_noise, generate_benchmark_dataset, Dataset, RngStream};

fn main() -> dyngma::Result<()> {
    let tmp = tempfile::tempdir()?;
    let out = std::env::args()
        .nth(1)
        .map_or_else(|| tmp.path().to_path_buf(), Into::into);
    std::fs::create_dir_all(&out)?;
    let bench = Benchmark::TwoDim {};
    let clean = generate_benchmark_dataset(&bench, 200, 10, 0.1, 0.001, 7)?;
    let noisy = apply_measurement_noise(&clean, 0.02, &mut RngStream::new(8));
    noisy.save_binary(&out.join("two_dim.bin"))?;
    noisy.save_csv(&out.join("two_dim.csv"))?;
    // the files carry dim and trajectories; run metadata lives in the config
    for back in [
        Dataset::load_binary(&out.join("two_dim.bin"))?,
        Dataset::load_csv(&out.join("two_dim.csv"))?,
    ] {
        assert_eq!(
            (back.dim, &back.trajectories),
            (noisy.dim, &noisy.trajectories)
        );
    }
    let first = &noisy.trajectories[0];
    println!(
        "{} trajectories x {} states; first path starts at {:?} and ends at {:?}",
        noisy.trajectories.len(),
        first.len(),
        first.states[0],
        first.states[first.len() - 1]
    );
    println!(
        "binary and CSV round trips are exact; files in {}",
        out.display()
    );
    Ok(())
}
