//! Minimal differentiable core: parameter storage, dense networks with
//! hand-written reverse passes, and the adaptive-moment optimizer.

mod adam;
mod mlp;
mod param;

pub use adam::{sgd_step, AdamConfig, OptState};
pub use mlp::{Activation, Mlp, MlpSpec, Tape};
pub use param::{ParamId, ParamStore};
