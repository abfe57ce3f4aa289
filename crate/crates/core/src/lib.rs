pub mod active;
pub mod cli;
pub mod data;
pub mod diffcore;
pub mod error;
pub mod forward;
pub mod infer;
pub mod invmap;
pub mod oracles;
pub mod reweight;
pub mod rng;

pub use error::{MinError, Result};
