//! Spiking distributional RL: multi-compartment neurons, population-coded
//! quantile fractions, an STBP-trained quantile network, and desk-scale
//! environments with exact return-distribution oracles.

pub mod checkpoint;
pub mod checks;
pub mod config;
pub mod encoding;
pub mod error;
pub mod harness;
pub mod learning;
pub mod metrics;
pub mod network;
pub mod neuron;
pub mod run;
pub mod tensor;

pub use error::{Error, Result};
