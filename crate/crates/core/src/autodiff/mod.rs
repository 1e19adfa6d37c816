//! Scalar abstraction, reverse-mode tape, forward-mode duals and MLPs.

mod dual;
pub mod mlp;
pub mod params;
mod real;
mod tape;

pub use dual::{jacobian, Dual};
pub use mlp::{Mlp, MlpSpec};
pub use params::{Block, Layout, ParameterVector};
pub use real::{lift_all, values, Real};
pub use tape::{Tape, Var};
