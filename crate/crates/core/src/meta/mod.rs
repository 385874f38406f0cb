//! Meta-learning of the causal direction: base training of both hypotheses,
//! transfer adaptation, and descent on the structural parameter.

mod alpha;
mod config;
mod run;

pub use alpha::{r_grad, r_loss, sigmoid, AlphaState};
pub use config::{AdaptOptimizer, DataSource, Profile, RunConfig};
pub use run::{
    adapt_episode, adapt_on, mechanism, run_single, run_single_traced, train_base, train_base_traced, AlphaTrace,
    BaseTrace, DataStream, ModelPair, Shift, TransferEpisode,
};
