use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::gmm::{clamp_log_std, log_density_grad, GmmParams, MAX_COMPONENTS};
use crate::error::{Error, Result};
use crate::ndiff::{Mlp, MlpSpec, ParamId, ParamStore, Tape};

/// How a head produces its scale parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    /// Predicted per input by the network.
    Predicted,
    /// One learned value per component, independent of the input (homoscedastic).
    Shared,
}

/// A functional causal model network: (parents, noise) -> Gaussian-mixture parameters.
///
/// Inputs are laid out as `[parents.., noise..]`. With [`Scale::Predicted`] the
/// output is `[logits(k), means(k), log_stds(k)]`; with [`Scale::Shared`] the
/// log-stds are separate parameters and the output is `[logits(k), means(k)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FcmNet {
    parents: usize,
    noise_dim: usize,
    k: usize,
    scale: Scale,
    mlp: Mlp,
    shared_log_std: Option<ParamId>,
}

impl FcmNet {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        parents: usize,
        noise_dim: usize,
        k: usize,
        hidden: &[usize],
        scale: Scale,
        store: &mut ParamStore,
        prefix: &str,
        rng: &mut R,
    ) -> Result<Self> {
        if k == 0 || k > MAX_COMPONENTS {
            return Err(Error::config(format!(
                "mixture size must be in 1..={MAX_COMPONENTS}, got {k}"
            )));
        }
        let out = match scale {
            Scale::Predicted => 3 * k,
            Scale::Shared => 2 * k,
        };
        let spec = MlpSpec::new(parents + noise_dim, hidden, out)?;
        let mlp = Mlp::new(spec, store, prefix, rng);
        let shared_log_std = match scale {
            Scale::Predicted => None,
            Scale::Shared => Some(store.add(format!("{prefix}.log_std"), 1, k, vec![0.0; k])),
        };
        Ok(Self {
            parents,
            noise_dim,
            k,
            scale,
            mlp,
            shared_log_std,
        })
    }

    pub fn parents(&self) -> usize {
        self.parents
    }

    pub fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn scale(&self) -> Scale {
        self.scale
    }

    pub fn mlp(&self) -> &Mlp {
        &self.mlp
    }

    pub fn input_width(&self) -> usize {
        self.parents + self.noise_dim
    }

    pub fn output_width(&self) -> usize {
        self.mlp.spec().output()
    }

    /// Turns one row of raw network output into mixture parameters.
    pub fn decode(&self, store: &ParamStore, raw: &[f64]) -> GmmParams {
        let k = self.k;
        let log_stds = match self.shared_log_std {
            Some(id) => store.value(id).to_vec(),
            None => raw[2 * k..3 * k].to_vec(),
        };
        GmmParams::new(raw[..k].to_vec(), raw[k..2 * k].to_vec(), log_stds)
    }

    /// Mixture parameters for one parent vector and an explicit noise vector.
    pub fn forward(&self, store: &ParamStore, parents: &[f64], noise: &[f64]) -> Result<GmmParams> {
        if parents.len() != self.parents || noise.len() != self.noise_dim {
            return Err(Error::config(format!(
                "fcm expects {} parents and {} noise inputs, got {} and {}",
                self.parents,
                self.noise_dim,
                parents.len(),
                noise.len()
            )));
        }
        let mut input = parents.to_vec();
        input.extend_from_slice(noise);
        let raw = self.mlp.forward(store, &input)?;
        Ok(self.decode(store, &raw))
    }

    /// As [`forward`](Self::forward) with the noise drawn i.i.d. standard normal.
    pub fn forward_sampled<R: Rng + ?Sized>(
        &self,
        store: &ParamStore,
        parents: &[f64],
        rng: &mut R,
    ) -> Result<GmmParams> {
        let noise: Vec<f64> = (0..self.noise_dim).map(|_| rng.sample(StandardNormal)).collect();
        self.forward(store, parents, &noise)
    }

    pub fn forward_batch(&self, store: &ParamStore, inputs: &[f64], rows: usize) -> Tape {
        self.mlp.forward_batch(store, inputs, rows)
    }

    /// Per-row log-densities of `targets` under the mixtures in `raw` (shape `rows x output`).
    ///
    /// Writes `weight * d logp / d raw` into `d_raw` and accumulates `weight * d logp`
    /// into any shared log-std parameters.
    pub fn log_density_backprop(
        &self,
        store: &mut ParamStore,
        raw: &[f64],
        targets: &[f64],
        weight: f64,
        logp: &mut [f64],
        d_raw: &mut [f64],
    ) {
        let k = self.k;
        let width = self.output_width();
        let mut shared = [0.0; MAX_COMPONENTS];
        let mut shared_mask = [true; MAX_COMPONENTS];
        if let Some(id) = self.shared_log_std {
            for (j, &s) in store.value(id).iter().enumerate() {
                let (c, inside) = clamp_log_std(s);
                shared[j] = c;
                shared_mask[j] = inside;
            }
        }
        let mut ls = [0.0; MAX_COMPONENTS];
        let mut mask = [true; MAX_COMPONENTS];
        let mut g_ls = [0.0; MAX_COMPONENTS];
        let mut g_shared = [0.0; MAX_COMPONENTS];

        for (r, (row, d)) in raw.chunks_exact(width).zip(d_raw.chunks_exact_mut(width)).enumerate() {
            match self.scale {
                Scale::Predicted => {
                    for j in 0..k {
                        let (c, inside) = clamp_log_std(row[2 * k + j]);
                        ls[j] = c;
                        mask[j] = inside;
                    }
                }
                Scale::Shared => {
                    ls[..k].copy_from_slice(&shared[..k]);
                    mask[..k].copy_from_slice(&shared_mask[..k]);
                }
            }
            let (dl, rest) = d.split_at_mut(k);
            let (dm, _) = rest.split_at_mut(k);
            logp[r] = log_density_grad(&row[..k], &row[k..2 * k], &ls[..k], targets[r], dl, dm, &mut g_ls[..k]);
            for v in dl.iter_mut().chain(dm.iter_mut()) {
                *v *= weight;
            }
            for j in 0..k {
                let g = if mask[j] { weight * g_ls[j] } else { 0.0 };
                match self.scale {
                    Scale::Predicted => d[2 * k + j] = g,
                    Scale::Shared => g_shared[j] += g,
                }
            }
        }
        if let Some(id) = self.shared_log_std {
            for (g, add) in store.grad_mut(id).iter_mut().zip(&g_shared[..k]) {
                *g += add;
            }
        }
    }

    /// Backpropagates `d_raw` through the network; returns the input gradient.
    pub fn backward_batch(&self, store: &mut ParamStore, tape: &Tape, d_raw: &[f64]) -> Vec<f64> {
        self.mlp.backward_batch(store, tape, d_raw)
    }
}

/// Mean negative log-likelihood of `targets` given `parents` (rows x parent count) and
/// `noise` (rows x noise dim). Gradients of the mean loss accumulate into `store`.
pub fn nll_loss(net: &FcmNet, store: &mut ParamStore, parents: &[f64], targets: &[f64], noise: &[f64]) -> Result<f64> {
    let rows = targets.len();
    if rows == 0 || parents.len() != rows * net.parents || noise.len() != rows * net.noise_dim {
        return Err(Error::config(format!(
            "nll batch shapes: {} targets, {} parent values, {} noise values",
            rows,
            parents.len(),
            noise.len()
        )));
    }
    let width = net.input_width();
    let mut inputs = vec![0.0; rows * width];
    for r in 0..rows {
        let row = &mut inputs[r * width..(r + 1) * width];
        row[..net.parents].copy_from_slice(&parents[r * net.parents..(r + 1) * net.parents]);
        row[net.parents..].copy_from_slice(&noise[r * net.noise_dim..(r + 1) * net.noise_dim]);
    }
    let tape = net.forward_batch(store, &inputs, rows);
    let mut logp = vec![0.0; rows];
    let mut d_raw = vec![0.0; rows * net.output_width()];
    net.log_density_backprop(store, tape.output(), targets, -1.0 / rows as f64, &mut logp, &mut d_raw);
    if let Some(bad) = logp.iter().position(|v| !v.is_finite()) {
        return Err(Error::run(format!("non-finite log-likelihood at batch index {bad}")));
    }
    net.backward_batch(store, &tape, &d_raw);
    Ok(-logp.iter().sum::<f64>() / rows as f64)
}
