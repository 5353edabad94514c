//! Multi-agent active hypothesis testing: a sequential anomaly-detection
//! environment with exact Bayesian beliefs, an actor-critic PPO trainer built
//! on a small dense network library, and evaluation tooling for error rate,
//! detection delay and Bayes risk.

pub mod cli;
pub mod env;
pub mod error;
pub mod eval;
pub mod nn;
pub mod ppo;
pub mod rng;
pub mod rollout;
pub mod sum;

pub use error::{Error, Result};
