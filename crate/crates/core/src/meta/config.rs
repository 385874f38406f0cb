use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::latent::ModelConfig;
use crate::scm::{ScmConfig, SplineConfig};

/// Named default bundles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    /// Full-scale experiment settings.
    Paper,
    /// Reduced sizes that exercise the whole pipeline in minutes.
    Fast,
}

impl FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "paper" => Ok(Profile::Paper),
            "fast" => Ok(Profile::Fast),
            other => Err(Error::config(format!("profile: expected `paper` or `fast`, got `{other}`"))),
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Profile::Paper => "paper",
            Profile::Fast => "fast",
        })
    }
}

/// Where training and transfer batches come from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    /// Fresh draws from the generator for every batch.
    Infinite,
    /// Fixed pools resampled with replacement.
    Finite {
        train_size: usize,
        transfer_size: usize,
        episode_size: usize,
        n_transfers: usize,
    },
}

/// Update rule used while adapting to a transfer distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdaptOptimizer {
    Adam,
    Sgd,
}

/// Everything one meta-learning run needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scm: ScmConfig,
    pub spline: SplineConfig,
    pub model: ModelConfig,
    /// Observations per draw in the infinite regime.
    pub samples: usize,
    /// Monte-Carlo draws per ELBO expectation.
    pub mc_samples: usize,
    pub train_iters: usize,
    pub alpha_iters: usize,
    pub adapt_steps: usize,
    pub net_lr: f64,
    pub adapt_lr: f64,
    pub adapt_optimizer: AdaptOptimizer,
    pub alpha_lr: f64,
    pub data: DataSource,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::profile(Profile::Paper)
    }
}

impl RunConfig {
    pub fn profile(profile: Profile) -> Self {
        let base = Self {
            scm: ScmConfig::default(),
            spline: SplineConfig::default(),
            model: ModelConfig::default(),
            samples: 1000,
            mc_samples: 300,
            train_iters: 500,
            alpha_iters: 400,
            adapt_steps: 5,
            net_lr: 1e-2,
            adapt_lr: 1e-2,
            adapt_optimizer: AdaptOptimizer::Adam,
            alpha_lr: 0.5,
            data: DataSource::Infinite,
        };
        match profile {
            Profile::Paper => base,
            Profile::Fast => Self {
                model: ModelConfig {
                    hidden: vec![16],
                    ..ModelConfig::default()
                },
                samples: 200,
                mc_samples: 30,
                train_iters: 150,
                alpha_iters: 150,
                ..base
            },
        }
    }

    /// Observations per training or transfer batch.
    pub fn batch_size(&self) -> usize {
        match self.data {
            DataSource::Infinite => self.samples,
            DataSource::Finite { episode_size, .. } => episode_size,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.scm.validate()?;
        self.spline.validate()?;
        self.model.validate()?;
        let at_least = |key: &str, v: usize, min: usize| {
            if v < min {
                Err(Error::config(format!("{key} must be >= {min}, got {v}")))
            } else {
                Ok(())
            }
        };
        at_least("samples", self.samples, 2)?;
        at_least("mc_samples", self.mc_samples, 1)?;
        at_least("alpha_iters", self.alpha_iters, 1)?;
        at_least("adapt_steps", self.adapt_steps, 1)?;
        for (key, v) in [("net_lr", self.net_lr), ("adapt_lr", self.adapt_lr), ("alpha_lr", self.alpha_lr)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config(format!("{key} must be finite and >= 0, got {v}")));
            }
        }
        if let DataSource::Finite {
            train_size,
            transfer_size,
            episode_size,
            n_transfers,
        } = self.data
        {
            at_least("data.train_size", train_size, 2)?;
            at_least("data.transfer_size", transfer_size, 2)?;
            at_least("data.episode_size", episode_size, 2)?;
            at_least("data.n_transfers", n_transfers, 1)?;
        }
        Ok(())
    }
}
