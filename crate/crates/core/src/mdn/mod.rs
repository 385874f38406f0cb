//! Mixture-density mechanism networks and Gaussian-mixture math.

mod fcm;
mod gmm;

pub use fcm::{nll_loss, FcmNet, Scale};
pub use gmm::{
    clamp_log_std, log_add_exp, log_density_grad, mixture_mean, normal_log_density, GmmParams, HALF_LN_2PI,
    LOG_STD_MAX, LOG_STD_MIN, MAX_COMPONENTS,
};
