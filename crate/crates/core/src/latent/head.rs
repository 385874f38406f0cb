use rand::Rng;

use crate::error::Result;
use crate::mdn::{clamp_log_std, normal_log_density, Scale};
use crate::ndiff::{Mlp, MlpSpec, ParamId, ParamStore, Tape};

/// Clamps a raw log-variance with the same bounds as the mixture log-stds.
#[inline]
pub(crate) fn clamp_log_var(raw: f64) -> (f64, bool) {
    let (s, inside) = clamp_log_std(0.5 * raw);
    (2.0 * s, inside)
}

/// A conditional Gaussian `N(mean(input), exp(log_var(input)))`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussHead {
    mlp: Mlp,
    scale: Scale,
    shared_log_var: Option<ParamId>,
}

impl GaussHead {
    pub fn new<R: Rng + ?Sized>(
        input: usize,
        hidden: &[usize],
        scale: Scale,
        store: &mut ParamStore,
        prefix: &str,
        rng: &mut R,
    ) -> Result<Self> {
        let out = match scale {
            Scale::Predicted => 2,
            Scale::Shared => 1,
        };
        let mlp = Mlp::new(MlpSpec::new(input, hidden, out)?, store, prefix, rng);
        let shared_log_var = match scale {
            Scale::Predicted => None,
            Scale::Shared => Some(store.add(format!("{prefix}.log_var"), 1, 1, vec![0.0])),
        };
        Ok(Self {
            mlp,
            scale,
            shared_log_var,
        })
    }

    pub fn mlp(&self) -> &Mlp {
        &self.mlp
    }

    pub fn scale(&self) -> Scale {
        self.scale
    }

    fn width(&self) -> usize {
        self.mlp.spec().output()
    }

    /// `(mean, clamped log-variance, log-variance inside bounds)` for one output row.
    #[inline]
    pub(crate) fn decode(&self, shared: Option<f64>, row: &[f64]) -> (f64, f64, bool) {
        let raw_lv = match shared {
            Some(v) => v,
            None => row[1],
        };
        let (lv, inside) = clamp_log_var(raw_lv);
        (row[0], lv, inside)
    }

    pub(crate) fn shared_value(&self, store: &ParamStore) -> Option<f64> {
        self.shared_log_var.map(|id| store.value(id)[0])
    }

    /// Mean and variance for a single input.
    pub fn eval(&self, store: &ParamStore, input: &[f64]) -> Result<(f64, f64)> {
        let raw = self.mlp.forward(store, input)?;
        let (mean, lv, _) = self.decode(self.shared_value(store), &raw);
        Ok((mean, lv.exp()))
    }

    pub fn forward_batch(&self, store: &ParamStore, inputs: &[f64], rows: usize) -> Tape {
        self.mlp.forward_batch(store, inputs, rows)
    }

    /// Per-row `(mean, log_var, inside)` of a batch output.
    pub(crate) fn decode_batch(&self, store: &ParamStore, raw: &[f64]) -> Vec<(f64, f64, bool)> {
        let shared = self.shared_value(store);
        raw.chunks_exact(self.width()).map(|row| self.decode(shared, row)).collect()
    }

    /// Maps gradients with respect to `(mean, log_var)` per row back onto the raw output,
    /// accumulating the shared log-variance gradient into the store.
    pub(crate) fn raw_grad(
        &self,
        store: &mut ParamStore,
        decoded: &[(f64, f64, bool)],
        d_mean: &[f64],
        d_log_var: &[f64],
    ) -> Vec<f64> {
        let width = self.width();
        let mut d_raw = vec![0.0; decoded.len() * width];
        let mut shared = 0.0;
        for (r, &(_, _, inside)) in decoded.iter().enumerate() {
            d_raw[r * width] = d_mean[r];
            let g = if inside { d_log_var[r] } else { 0.0 };
            match self.scale {
                Scale::Predicted => d_raw[r * width + 1] = g,
                Scale::Shared => shared += g,
            }
        }
        if let Some(id) = self.shared_log_var {
            store.grad_mut(id)[0] += shared;
        }
        d_raw
    }

    /// Per-row log-densities of `targets`; writes `weight * d logp / d raw` into the
    /// returned buffer and handles the shared log-variance like [`raw_grad`](Self::raw_grad).
    pub(crate) fn log_density_backprop(
        &self,
        store: &mut ParamStore,
        raw: &[f64],
        targets: &[f64],
        weight: f64,
        logp: &mut [f64],
    ) -> Vec<f64> {
        let decoded = self.decode_batch(store, raw);
        let mut d_mean = vec![0.0; decoded.len()];
        let mut d_lv = vec![0.0; decoded.len()];
        for (r, &(mean, lv, _)) in decoded.iter().enumerate() {
            let t = targets[r];
            logp[r] = normal_log_density(t, mean, lv);
            let inv_var = (-lv).exp();
            let d = t - mean;
            d_mean[r] = weight * d * inv_var;
            d_lv[r] = weight * 0.5 * (d * d * inv_var - 1.0);
        }
        self.raw_grad(store, &decoded, &d_mean, &d_lv)
    }

    pub fn backward_batch(&self, store: &mut ParamStore, tape: &Tape, d_raw: &[f64]) -> Vec<f64> {
        self.mlp.backward_batch(store, tape, d_raw)
    }
}
