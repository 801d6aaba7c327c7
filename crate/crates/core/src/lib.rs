//! Bayesian neural networks for binary classification with Monte-Carlo
//! predictive uncertainty, variance-based loss bounds and evaluation tools.

pub mod baselines;
pub mod bounds;
pub mod dataio;
pub mod error;
pub mod harness;
pub mod inference;
pub mod metrics;
pub mod ndcore;
pub mod network;
pub mod rng;
pub mod training;
pub mod variational;

pub use error::{Error, Result};
