//! The symmetric 2D+1 point rule and a Gaussian expectation with it.
//!
//! `cargo run --release --example cubature_rule`

use dyngma::density::make_cubature;

fn main() {
    for d in [1, 2, 3] {
        let r = make_cubature(d);
        println!("D = {d}: {} points", r.len());
        for (xi, w) in r.points.iter().zip(&r.weights) {
            println!("  w = {w:.6}  xi = {xi:?}");
        }
    }
    // E[x²] and E[x⁴] under N(0, 1): the rule is exact for the first, not the second
    let r = make_cubature(1);
    let m2: f64 = r
        .points
        .iter()
        .zip(&r.weights)
        .map(|(x, w)| w * x[0].powi(2))
        .sum();
    let m4: f64 = r
        .points
        .iter()
        .zip(&r.weights)
        .map(|(x, w)| w * x[0].powi(4))
        .sum();
    println!("E[x^2] = {m2:.12} (exact 1), E[x^4] = {m4:.6} (exact 3)");
}
