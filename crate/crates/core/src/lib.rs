//! Causal direction discovery between two observed variables under a latent
//! confounder.
//!
//! Two candidate models (one per direction) are trained on a training
//! distribution, adapted for a few steps to shifted transfer distributions,
//! and scored by their accumulated variational lower bounds. A scalar
//! structural parameter is optimized on those scores; its sigmoid is the
//! belief that `X` causes `Y`. Repeated stochastic runs are combined by a
//! cutoff-based plurality vote into one of three verdicts.
//!
//! Module map:
//! - [`ndiff`]: networks, gradients, optimizer
//! - [`scm`]: synthetic data generation
//! - [`mdn`]: mixture-density causal mechanism networks
//! - [`latent`]: variational inference for the confounder
//! - [`meta`]: the structural-parameter meta-learning loop
//! - [`vote`]: super-runs and verdict analytics
//! - [`experiment`]: presets, configuration, result files

pub mod error;
pub mod experiment;
pub mod latent;
pub mod mdn;
pub mod meta;
pub mod ndiff;
pub mod scm;
pub mod seed;
pub mod vote;

pub use error::{Error, Result};
