//! Synthetic data: the spline mechanism, the latent confounder and its proxy,
//! training and transfer distributions, and finite bootstrap pools.

mod config;
mod dataset;
mod generate;
mod spline;

pub use config::{Latent, Scenario, ScmConfig, SplineConfig};
pub use dataset::{DataTag, Dataset};
pub use generate::{bootstrap_batch, draw_transfer_mean, sample_dataset, sample_latent, FinitePool, PoolSlot};
pub use spline::SplineMechanism;
