//! Variational inference for the latent confounder: Gaussian heads, the
//! per-direction model, and the Monte-Carlo ELBO.

mod elbo;
mod head;
mod model;

pub use elbo::{
    elbo, elbo_backprop, elbo_with_noise, reparam_sample, train_step, ElboEstimate, ElboNoise, ElboTerms,
    ReparamDraws,
};
pub use head::GaussHead;
pub use model::{Direction, DirectionModel, ModelConfig};
