//! Neural estimation of conditional value-at-risk and expected shortfall.

pub mod data;
pub mod dim;
pub mod error;
pub mod losses;
pub mod nn;
pub mod optim;
pub mod oracles;
pub mod rng;
pub mod trainers;
pub mod validation;

pub use error::{Error, Result};
