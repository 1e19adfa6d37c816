//! Learning stochastic differential equations from trajectory snapshots
//! with a Gaussian-mixture approximation of the transition density.

// `!(x > 0.0)` is used on purpose: it also rejects NaN. Index loops mirror
// the formulas.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod autodiff;
pub mod density;
pub mod error;
pub mod experiment;
pub mod invariant;
pub mod linalg;
pub mod metrics;
pub mod sde;
pub mod simulate;
pub mod train;

pub use error::{Error, Result};
