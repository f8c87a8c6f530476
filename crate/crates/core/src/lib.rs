//! Topology-optimization data generators, a convolutional encoder-decoder
//! surrogate trained on their output, and error metrics that re-evaluate
//! predicted designs with the original physics.

pub mod cli;
pub mod dataset;
pub mod error;
pub mod fem;
pub mod metrics;
pub mod nn;
pub mod problems;
pub mod topopt;

pub use error::{Error, Result};
