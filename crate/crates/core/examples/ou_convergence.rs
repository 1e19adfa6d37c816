//! Mean error of composed Gaussian steps on an OU process at a fixed
//! horizon, with the fitted log-log slope of each scheme.
//!
//! `cargo run --release --example ou_convergence`

use dyngma::density::{gauss_step, Scheme};
use dyngma::metrics::order_fit;
use dyngma::sde::{ou_exact_transition, Benchmark};

fn main() -> dyngma::Result<()> {
    let (a, s, horizon, z0) = (1.0, 0.5, 1.6, 1.0);
    let sde = Benchmark::OrnsteinUhlenbeck { a, s };
    let (exact_mean, exact_var) = ou_exact_transition(a, s, z0, horizon);
    let hs = [0.4, 0.2, 0.1, 0.05];
    println!("exact mean {exact_mean:.8}, variance {exact_var:.8} at t = {horizon}");
    for (name, scheme, l) in [
        ("euler-maruyama", Scheme::EulerMaruyama, 1),
        ("asymptotic L=2", Scheme::Asymptotic, 2),
        ("cholesky-free", Scheme::CholFree, 1),
    ] {
        let mut errs = Vec::new();
        for &h in &hs {
            let mut z = vec![z0];
            for _ in 0..(horizon / h).round() as usize {
                z = gauss_step(&sde, &z, h, l, scheme)?.0;
            }
            errs.push((z[0] - exact_mean).abs());
        }
        let slope = order_fit(&hs, &errs)?;
        let shown: Vec<String> = errs.iter().map(|e| format!("{e:.3e}")).collect();
        println!("{name:>15}: errors {} slope {slope:.3}", shown.join(" "));
    }
    Ok(())
}
