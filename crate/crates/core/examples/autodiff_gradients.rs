//! Reverse-mode gradient of an MLP loss on the tape, checked against
//! central differences, plus a forward-mode input Jacobian.
//!
//! `cargo run --release --example autodiff_gradients`

use dyngma::autodiff::{jacobian, Dual, Layout, Mlp, MlpSpec, ParameterVector, Real, Tape};
use dyngma::simulate::RngStream;

fn loss<R: Real>(net: &Mlp, p: &[R], x: &[R]) -> R {
    let y = net.forward(p, x).unwrap();
    y.iter().fold(x[0].lift(0.0), |acc, &v| acc + v * v)
}

fn main() {
    let mut layout = Layout::new();
    let net = Mlp::register(&mut layout, "f", MlpSpec::new(2, &[8, 8], 2));
    let mut params = ParameterVector::zeros(layout);
    net.init_glorot(&mut params.values, &mut RngStream::new(5));
    let x = [0.3, -0.7];

    let tape = Tape::new();
    let p = tape.leaves(&params.values);
    let tx: Vec<_> = x.iter().map(|&v| tape.constant(v)).collect();
    let out = loss(&net, &p, &tx);
    let g = tape.grad(out, &p).unwrap();
    println!(
        "loss {:.6}, {} tape nodes, {} parameters",
        out.value(),
        tape.len(),
        g.len()
    );

    let mut worst = 0.0f64;
    for k in 0..g.len() {
        let (mut a, mut b) = (params.values.clone(), params.values.clone());
        a[k] += 1e-6;
        b[k] -= 1e-6;
        let fd = (loss(&net, &a, &x) - loss(&net, &b, &x)) / 2e-6;
        worst = worst.max((fd - g[k]).abs());
    }
    println!("max |reverse - central difference| = {worst:.2e}");

    let lifted: Vec<Dual<f64>> = params.values.iter().map(|&v| Dual::constant(v)).collect();
    let (y, j) = jacobian(|z| net.forward(&lifted, z).unwrap(), &x);
    let (_, exact) = net.forward_jacobian(&params.values, &x).unwrap();
    println!("f(x) = {y:?}");
    println!("df/dx = [{:?}, {:?}]", j.row(0), j.row(1));
    let gap = (0..2)
        .flat_map(|r| (0..2).map(move |c| (r, c)))
        .map(|(r, c)| (j[(r, c)] - exact[(r, c)]).abs())
        .fold(0.0, f64::max);
    println!("max |dual - analytic Jacobian| = {gap:.2e}");
}
