//! Loss-based training prioritization: Selective Backprop on loss or
//! prediction entropy, loss-proportional importance sampling, the three
//! dataset corruptions, and a harness that measures backprops-to-threshold
//! speedup and how often corrupted examples are chosen.

pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod harness;
pub mod model;
pub mod prioritizer;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
