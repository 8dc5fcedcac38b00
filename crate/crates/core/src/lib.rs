pub mod autoencoder;
pub mod config;
pub mod baselines;
pub mod cpm;
pub mod dataset;
pub mod embedding;
pub mod error;
pub mod harness;
pub mod interpret;
pub mod rng;
pub mod stream;

pub use error::{Error, Result};
