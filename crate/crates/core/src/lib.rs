//! Numerical experiments on central limit behaviour of p-convex bodies and
//! of a radially symmetric counterexample without a thin shell.

pub mod cli;
pub mod error;
pub mod numerics;
pub mod pconvex;
pub mod radial;
pub mod rng;
pub mod samplers;
pub mod stats;

pub use error::{Error, Result};
