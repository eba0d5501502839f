pub mod divergences;
pub mod error;
pub mod experiments;
pub mod io;
pub mod likelihood;
pub mod mcmc;
pub mod mutation;
pub mod priors;
pub mod seed;
pub mod stats;
pub mod trees;
pub mod verify;

pub use error::{Error, Result};
