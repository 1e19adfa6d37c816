//! Throughput of the likelihood gradient on the 2-d benchmark.
//!
//!     cargo run --release --example bench_loss

use std::time::Instant;

use dyngma::sde::{Benchmark, DiffusionKind, ParameterizedSde};
use dyngma::simulate::{generate_benchmark_dataset, RngStream};
use dyngma::train::{multistep_loss_and_grad, LossScheme, LossSpec};

fn main() -> dyngma::Result<()> {
    let bench = Benchmark::TwoDim {};
    let data = generate_benchmark_dataset(&bench, 500, 1, 0.2, 0.002, 1)?;
    for (name, kind, dh) in [
        ("constant", DiffusionKind::ConstantTriangular, vec![]),
        ("state-dependent", DiffusionKind::StateDependent, vec![16]),
    ] {
        let model = ParameterizedSde::new(2, &[32, 32], kind, &dh);
        let theta = model.init(&mut RngStream::new(0)).values;
        for scheme in [
            LossScheme::DyngmaAlg1,
            LossScheme::DyngmaAlg2,
            LossScheme::EulerMaruyama,
        ] {
            let spec = LossSpec::new(scheme).with_steps(0.1, 0.05);
            let start = Instant::now();
            let (l, _) = multistep_loss_and_grad(&data, &model, &theta, &spec)?;
            let per = start.elapsed().as_secs_f64() / 500.0 * 1e6;
            println!(
                "{name:>16} {:<18} loss {l:9.4}  {per:8.1} µs/pair",
                scheme.name()
            );
        }
    }
    Ok(())
}
