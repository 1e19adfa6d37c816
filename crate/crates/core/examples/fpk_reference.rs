//! Stationary density of the 2-d benchmark from the finite-volume FPK solve,
//! written as a CSV grid of the generalized potential.
//!
//!     cargo run --release --example fpk_reference -- [out.csv]

use std::time::Instant;

use dyngma::invariant::{fpk_stationary_2d, FpkConfig};
use dyngma::sde::Benchmark;
use dyngma::simulate::fmt_real;

fn main() -> dyngma::Result<()> {
    let sde = Benchmark::TwoDim {};
    let start = Instant::now();
    let sol = fpk_stationary_2d(&sde, [(-2.0, 2.0), (-3.0, 3.0)], &FpkConfig::default())?;
    println!(
        "200x200 solve: residual {:.2e}, {:.1?}",
        sol.residual,
        start.elapsed()
    );
    // ε̂ = ‖σ‖_F²/2 = (1/50 + 1/5)/2
    let v = sol.potential(0.11);
    let hi = v.iter().copied().fold(0.0, f64::max);
    println!("potential range [0, {hi:.3}]");
    if let Some(path) = std::env::args().nth(1) {
        let mut s = String::from("x,y,value\n");
        for (i, x) in sol.xs.iter().enumerate() {
            for (j, y) in sol.ys.iter().enumerate() {
                s.push_str(&format!(
                    "{},{},{}\n",
                    fmt_real(*x),
                    fmt_real(*y),
                    fmt_real(v[i * sol.ys.len() + j])
                ));
            }
        }
        std::fs::write(&path, s)?;
        println!("wrote {path}");
    }
    Ok(())
}
