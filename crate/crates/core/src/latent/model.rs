use std::fmt;

use serde::{Deserialize, Serialize};

use super::head::GaussHead;
use crate::error::{Error, Result};
use crate::mdn::{FcmNet, Scale, MAX_COMPONENTS};
use crate::ndiff::ParamStore;
use crate::seed;

/// Hypothesized causal direction of a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "x->y")]
    XToY,
    #[serde(rename = "y->x")]
    YToX,
}

impl Direction {
    /// `(cause, effect)` columns of a dataset under this hypothesis.
    pub fn split<'a>(&self, x: &'a [f64], y: &'a [f64]) -> (&'a [f64], &'a [f64]) {
        match self {
            Direction::XToY => (x, y),
            Direction::YToX => (y, x),
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::XToY => "X->Y",
            Direction::YToX => "Y->X",
        })
    }
}

/// Network shapes shared by every head of a direction model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// Hidden layer widths; empty gives linear heads.
    pub hidden: Vec<usize>,
    /// Mixture components of the effect conditional.
    pub components: usize,
    /// Width of the independent noise input of the effect network.
    pub noise_dim: usize,
    pub scale: Scale,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden: vec![32],
            components: 5,
            noise_dim: 1,
            scale: Scale::Predicted,
        }
    }
}

impl ModelConfig {
    /// Linear heads with input-independent variances and a single-Gaussian effect: the
    /// whole model is jointly Gaussian, so its marginal likelihood has a closed form.
    pub fn linear_gaussian() -> Self {
        Self {
            hidden: vec![],
            components: 1,
            noise_dim: 0,
            scale: Scale::Shared,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.components == 0 || self.components > MAX_COMPONENTS {
            return Err(Error::config(format!(
                "model.components must be in 1..={MAX_COMPONENTS}, got {}",
                self.components
            )));
        }
        if self.hidden.iter().any(|&h| h == 0) {
            return Err(Error::config("model.hidden widths must be >= 1"));
        }
        Ok(())
    }
}

/// One causal hypothesis: encoder `q(z | cause)`, decoders `p(w | z)` and
/// `p(cause | z)`, and the mixture-density effect conditional `p(effect | cause, z)`.
/// The prior `p(z)` is a fixed standard normal.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionModel {
    direction: Direction,
    store: ParamStore,
    encoder: GaussHead,
    cause: GaussHead,
    effect: FcmNet,
    proxy: GaussHead,
}

impl DirectionModel {
    pub fn new(direction: Direction, config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = seed::rng(seed);
        let mut store = ParamStore::new();
        let h = &config.hidden;
        let encoder = GaussHead::new(1, h, config.scale, &mut store, "encoder", &mut rng)?;
        let cause = GaussHead::new(1, h, config.scale, &mut store, "cause", &mut rng)?;
        let effect = FcmNet::new(
            2,
            config.noise_dim,
            config.components,
            h,
            config.scale,
            &mut store,
            "effect",
            &mut rng,
        )?;
        let proxy = GaussHead::new(1, h, config.scale, &mut store, "proxy", &mut rng)?;
        Ok(Self {
            direction,
            store,
            encoder,
            cause,
            effect,
            proxy,
        })
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn encoder(&self) -> &GaussHead {
        &self.encoder
    }

    pub fn cause_head(&self) -> &GaussHead {
        &self.cause
    }

    pub fn effect(&self) -> &FcmNet {
        &self.effect
    }

    pub fn proxy(&self) -> &GaussHead {
        &self.proxy
    }

    /// Per-sample `(mean, variance)` of `q(z | cause)`.
    pub fn encode(&self, cause: &[f64]) -> Vec<(f64, f64)> {
        let tape = self.encoder.forward_batch(&self.store, cause, cause.len());
        self.encoder
            .decode_batch(&self.store, tape.output())
            .into_iter()
            .map(|(m, lv, _)| (m, lv.exp()))
            .collect()
    }

    /// Mixture mean of the effect given `cause` and `z`, with the noise input held at zero.
    pub fn conditional_mean(&self, cause: f64, z: f64) -> f64 {
        let noise = vec![0.0; self.effect.noise_dim()];
        self.effect
            .forward(&self.store, &[cause, z], &noise)
            .map(|p| p.conditional_mean())
            .unwrap_or(f64::NAN)
    }

    /// Pieces of the model borrowed together for the ELBO pass.
    pub(crate) fn parts_mut(&mut self) -> (&mut ParamStore, &GaussHead, &GaussHead, &FcmNet, &GaussHead) {
        (&mut self.store, &self.encoder, &self.cause, &self.effect, &self.proxy)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_seeds_identical_models() {
        let cfg = ModelConfig::default();
        let a = DirectionModel::new(Direction::XToY, &cfg, 3).unwrap();
        let b = DirectionModel::new(Direction::XToY, &cfg, 3).unwrap();
        assert_eq!(a, b);
        let c = DirectionModel::new(Direction::XToY, &cfg, 4).unwrap();
        assert_ne!(a.store().flat_values(), c.store().flat_values());
    }

    #[test]
    fn encoder_is_deterministic() {
        let m = DirectionModel::new(Direction::YToX, &ModelConfig::default(), 1).unwrap();
        let batch = [0.1, -2.0, 3.5];
        assert_eq!(m.encode(&batch), m.encode(&batch));
        assert!(m.encode(&batch).iter().all(|(mu, v)| mu.is_finite() && *v > 0.0));
    }

    #[test]
    fn zero_weight_encoder() {
        let mut m = DirectionModel::new(Direction::XToY, &ModelConfig::default(), 2).unwrap();
        let layers = m.encoder().mlp().layer_params();
        let store = m.store_mut();
        for (w, b) in &layers {
            store.value_mut(*w).iter_mut().for_each(|v| *v = 0.0);
            store.value_mut(*b).iter_mut().for_each(|v| *v = 0.0);
        }
        let (_, b_out) = layers[1];
        store.value_mut(b_out).copy_from_slice(&[0.4, -1.0]);
        for (mu, var) in m.encode(&[1.0, -7.0, 0.0]) {
            assert_eq!(mu, 0.4);
            assert!((var - (-1.0f64).exp()).abs() < 1e-15);
        }
    }

    #[test]
    fn invalid_model_config() {
        let cfg = ModelConfig {
            components: 0,
            ..ModelConfig::default()
        };
        assert!(DirectionModel::new(Direction::XToY, &cfg, 0).is_err());
    }
}
