use serde::{Deserialize, Serialize};

use super::param::ParamStore;
use crate::error::{Error, Result};

/// Hyperparameters of the adaptive-moment optimizer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }
}

/// Moment estimates for every tensor of one [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct OptState {
    config: AdamConfig,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl OptState {
    pub fn new(config: AdamConfig, store: &ParamStore) -> Self {
        let zeros: Vec<Vec<f64>> = store.ids().map(|id| vec![0.0; store.value(id).len()]).collect();
        Self {
            config,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One bias-corrected update against the current gradients, then zeroes them.
    ///
    /// A non-finite gradient aborts before any parameter moves.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<()> {
        if store.len() != self.m.len() {
            return Err(Error::config("optimizer state does not match parameter store"));
        }
        for id in store.ids() {
            if let Some(pos) = store.grad(id).iter().position(|g| !g.is_finite()) {
                return Err(Error::run(format!(
                    "non-finite gradient in parameter '{}' at index {pos}",
                    store.name(id)
                )));
            }
        }

        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        let ids: Vec<_> = store.ids().collect();
        for (k, id) in ids.into_iter().enumerate() {
            let m = &mut self.m[k];
            let v = &mut self.v[k];
            let (value, grad) = store.split_mut(id);
            for i in 0..value.len() {
                let g = grad[i];
                m[i] = beta1 * m[i] + (1.0 - beta1) * g;
                v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                value[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        store.zero_grad();
        if let Some(name) = store.first_non_finite() {
            return Err(Error::run(format!("parameter '{name}' became non-finite")));
        }
        Ok(())
    }
}

/// Plain gradient descent `value -= lr * grad`, then zeroes the gradients. Unlike
/// [`OptState::step`] the move is proportional to each gradient, so parameters whose
/// gradient is small barely change.
pub fn sgd_step(store: &mut ParamStore, lr: f64) -> Result<()> {
    for id in store.ids().collect::<Vec<_>>() {
        if let Some(pos) = store.grad(id).iter().position(|g| !g.is_finite()) {
            return Err(Error::run(format!(
                "non-finite gradient in parameter '{}' at index {pos}",
                store.name(id)
            )));
        }
        let (value, grad) = store.split_mut(id);
        for (v, g) in value.iter_mut().zip(grad.iter()) {
            *v -= lr * g;
        }
    }
    store.zero_grad();
    if let Some(name) = store.first_non_finite() {
        return Err(Error::run(format!("parameter '{name}' became non-finite")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(x: f64) -> ParamStore {
        let mut s = ParamStore::new();
        s.add("x", 1, 1, vec![x]);
        s
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut store = scalar(1.25);
        let mut opt = OptState::new(AdamConfig::default(), &store);
        for _ in 0..10 {
            opt.step(&mut store).unwrap();
        }
        assert_eq!(store.flat_values(), vec![1.25]);
        assert_eq!(opt.steps_taken(), 10);
    }

    #[test]
    fn first_step_is_lr_times_sign() {
        for g in [3.0, -0.02, 250.0] {
            let mut store = scalar(0.0);
            let id = store.find("x").unwrap();
            let lr = 0.01;
            let mut opt = OptState::new(AdamConfig::with_lr(lr), &store);
            store.grad_mut(id)[0] = g;
            opt.step(&mut store).unwrap();
            // m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps).
            let expected = -lr * g / (g.abs() + 1e-8);
            assert!((store.value(id)[0] - expected).abs() < 1e-15);
            assert_eq!(store.grad(id)[0], 0.0);
        }
    }

    #[test]
    fn quadratic_bowl_converges() {
        let mut store = scalar(0.0);
        let id = store.find("x").unwrap();
        let mut opt = OptState::new(AdamConfig::with_lr(0.05), &store);
        for _ in 0..500 {
            let x = store.value(id)[0];
            store.grad_mut(id)[0] = 2.0 * (x - 3.0);
            opt.step(&mut store).unwrap();
        }
        assert!((store.value(id)[0] - 3.0).abs() < 0.05);
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut store = scalar(0.0);
        let id = store.find("x").unwrap();
        let mut opt = OptState::new(AdamConfig::default(), &store);
        store.grad_mut(id)[0] = f64::NAN;
        let err = opt.step(&mut store).unwrap_err();
        assert!(matches!(err, Error::Run(ref m) if m.contains("'x'")));
        assert_eq!(store.value(id)[0], 0.0);
    }
}
