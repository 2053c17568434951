//! Federated SGLD simulator with posterior-chained priors.
//!
//! Trains a small Bayesian classifier across simulated nodes and days with
//! stochastic gradient Langevin dynamics. Each round, every node takes one
//! noisy gradient step from the current global parameters and a simulated
//! parameter server aggregates the results; the post-burn-in sequence of
//! global parameter vectors is the day's posterior sample. A Gaussian
//! fitted to those samples can seed the next day's prior, which is the
//! continual-learning strategy this crate exists to study against
//! transfer-learning and full-retraining baselines.
//!
//! Everything is deterministic given the master seed: every random stream
//! is derived from `(seed, purpose, day, node)`, so node-parallel and
//! sequential execution produce identical bytes. Node updates and
//! posterior-predictive averaging run on rayon when the `parallel` feature
//! (default) is enabled.

pub mod config;
pub mod datagen;
pub mod error;
pub mod federation;
pub mod metrics;
pub mod model;
pub mod persist;
pub mod prior;
pub mod report;
pub mod rng;
pub mod runner;
pub mod sgld;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};
