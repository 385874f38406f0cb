//! Monte-Carlo evidence lower bound with reparameterized latent draws.
//!
//! For hypothesis cause -> effect and sample `i`, with `z ~ q(z | cause_i)`:
//!
//! ```text
//! ln p(w|z) + ln p(cause|z) + ln p(effect|cause,z) + ln p(z) - ln q(z|cause)
//! ```
//!
//! averaged over `m` draws and over the batch.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::model::DirectionModel;
use crate::error::{Error, Result};
use crate::mdn::HALF_LN_2PI;
use crate::ndiff::OptState;
use crate::scm::Dataset;
use crate::seed;

/// Batch-mean contribution of each ELBO term.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ElboTerms {
    pub proxy: f64,
    pub cause: f64,
    pub effect: f64,
    pub prior: f64,
    pub entropy: f64,
}

impl ElboTerms {
    pub fn total(&self) -> f64 {
        self.proxy + self.cause + self.effect + self.prior + self.entropy
    }
}

/// A per-sample-averaged ELBO estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElboEstimate {
    pub value: f64,
    /// Monte-Carlo standard error of `value` across the `samples` draws (0 when `samples == 1`).
    pub std_error: f64,
    pub samples: usize,
    pub terms: ElboTerms,
}

/// Standard-normal draws behind one ELBO evaluation: `u` for the latent
/// (`n * m`, sample-major) and `eps` for the effect network's noise input.
#[derive(Debug, Clone, PartialEq)]
pub struct ElboNoise {
    pub n: usize,
    pub m: usize,
    pub noise_dim: usize,
    pub u: Vec<f64>,
    pub eps: Vec<f64>,
}

impl ElboNoise {
    pub fn draw(n: usize, m: usize, noise_dim: usize, seed: u64) -> Self {
        let mut rng = seed::rng(seed);
        let u = (0..n * m).map(|_| rng.sample(StandardNormal)).collect();
        let eps = (0..n * m * noise_dim).map(|_| rng.sample(StandardNormal)).collect();
        Self { n, m, noise_dim, u, eps }
    }
}

/// Reparameterized draws `z = mean + sqrt(variance) * u`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReparamDraws {
    pub mean: f64,
    pub variance: f64,
    pub u: Vec<f64>,
    pub z: Vec<f64>,
}

impl ReparamDraws {
    /// Gradients `(d/d mean, d/d variance)` of `sum_j dz_j * z_j`.
    pub fn pullback(&self, dz: &[f64]) -> (f64, f64) {
        let d_mean = dz.iter().sum();
        let d_var = if self.variance > 0.0 {
            let half_inv_sd = 0.5 / self.variance.sqrt();
            dz.iter().zip(&self.u).map(|(d, u)| d * u * half_inv_sd).sum()
        } else {
            0.0
        };
        (d_mean, d_var)
    }
}

pub fn reparam_sample(mean: f64, variance: f64, m: usize, seed: u64) -> Result<ReparamDraws> {
    if m == 0 {
        return Err(Error::config("reparameterized sample count must be >= 1"));
    }
    if !(variance >= 0.0) {
        return Err(Error::config(format!("variance must be >= 0, got {variance}")));
    }
    let mut rng = seed::rng(seed);
    let u: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
    let sd = variance.sqrt();
    let z = u.iter().map(|u| mean + sd * u).collect();
    Ok(ReparamDraws { mean, variance, u, z })
}

fn check_inputs(model: &DirectionModel, data: &Dataset, noise: &ElboNoise) -> Result<()> {
    if data.is_empty() {
        return Err(Error::config("elbo batch must be non-empty"));
    }
    if noise.m == 0 {
        return Err(Error::config("elbo needs at least one Monte-Carlo sample"));
    }
    if noise.n != data.len()
        || noise.noise_dim != model.effect().noise_dim()
        || noise.u.len() != noise.n * noise.m
        || noise.eps.len() != noise.n * noise.m * noise.noise_dim
    {
        return Err(Error::config(format!(
            "elbo noise shaped for n={} m={} noise_dim={}, batch has {} rows and model noise_dim {}",
            noise.n,
            noise.m,
            noise.noise_dim,
            data.len(),
            model.effect().noise_dim()
        )));
    }
    Ok(())
}

/// ELBO of `model` on `data` with fresh draws from `seed`; no gradients.
pub fn elbo(model: &DirectionModel, data: &Dataset, m: usize, seed: u64) -> Result<ElboEstimate> {
    let noise = ElboNoise::draw(data.len(), m, model.effect().noise_dim(), seed);
    elbo_with_noise(model, data, &noise)
}

/// ELBO with caller-supplied draws; no gradients.
pub fn elbo_with_noise(model: &DirectionModel, data: &Dataset, noise: &ElboNoise) -> Result<ElboEstimate> {
    let mut scratch = model.clone();
    run(&mut scratch, data, noise, false)
}

/// ELBO with caller-supplied draws. The gradient of the *negative* ELBO
/// accumulates into the model's parameter store.
pub fn elbo_backprop(model: &mut DirectionModel, data: &Dataset, noise: &ElboNoise) -> Result<ElboEstimate> {
    run(model, data, noise, true)
}

/// One optimizer step on `-ELBO` over every head of `model`.
pub fn train_step(
    model: &mut DirectionModel,
    opt: &mut OptState,
    batch: &Dataset,
    m: usize,
    seed: u64,
) -> Result<ElboEstimate> {
    let noise = ElboNoise::draw(batch.len(), m, model.effect().noise_dim(), seed);
    model.store_mut().zero_grad();
    let est = elbo_backprop(model, batch, &noise)?;
    opt.step(model.store_mut())?;
    Ok(est)
}

fn run(model: &mut DirectionModel, data: &Dataset, noise: &ElboNoise, backprop: bool) -> Result<ElboEstimate> {
    check_inputs(model, data, noise)?;
    let direction = model.direction();
    let (store, encoder, cause_head, effect, proxy) = model.parts_mut();
    let (cause, target) = direction.split(&data.x, &data.y);
    let n = data.len();
    let m = noise.m;
    let rows = n * m;
    let nd = noise.noise_dim;

    let enc_tape = encoder.forward_batch(store, cause, n);
    let q = encoder.decode_batch(store, enc_tape.output());

    let mut z = vec![0.0; rows];
    let mut cause_rep = vec![0.0; rows];
    let mut target_rep = vec![0.0; rows];
    let mut w_rep = vec![0.0; rows];
    let eff_width = effect.input_width();
    let mut eff_in = vec![0.0; rows * eff_width];
    for i in 0..n {
        let (mu, lv, _) = q[i];
        let sd = (0.5 * lv).exp();
        for j in 0..m {
            let r = i * m + j;
            z[r] = mu + sd * noise.u[r];
            cause_rep[r] = cause[i];
            target_rep[r] = target[i];
            w_rep[r] = data.w[i];
            let row = &mut eff_in[r * eff_width..(r + 1) * eff_width];
            row[0] = cause[i];
            row[1] = z[r];
            row[2..].copy_from_slice(&noise.eps[r * nd..(r + 1) * nd]);
        }
    }

    let weight = -1.0 / rows as f64;

    let proxy_tape = proxy.forward_batch(store, &z, rows);
    let mut lp_w = vec![0.0; rows];
    let d_proxy = proxy.log_density_backprop(store, proxy_tape.output(), &w_rep, weight, &mut lp_w);

    let cause_tape = cause_head.forward_batch(store, &z, rows);
    let mut lp_c = vec![0.0; rows];
    let d_cause = cause_head.log_density_backprop(store, cause_tape.output(), &cause_rep, weight, &mut lp_c);

    let eff_tape = effect.forward_batch(store, &eff_in, rows);
    let mut lp_e = vec![0.0; rows];
    let mut d_eff = vec![0.0; rows * effect.output_width()];
    effect.log_density_backprop(store, eff_tape.output(), &target_rep, weight, &mut lp_e, &mut d_eff);

    let mut terms = ElboTerms::default();
    let mut per_draw = vec![0.0; m];
    for i in 0..n {
        let (_, lv, _) = q[i];
        for j in 0..m {
            let r = i * m + j;
            let u = noise.u[r];
            let prior = -HALF_LN_2PI - 0.5 * z[r] * z[r];
            let entropy = HALF_LN_2PI + 0.5 * lv + 0.5 * u * u;
            terms.proxy += lp_w[r];
            terms.cause += lp_c[r];
            terms.effect += lp_e[r];
            terms.prior += prior;
            terms.entropy += entropy;
            per_draw[j] += lp_w[r] + lp_c[r] + lp_e[r] + prior + entropy;
        }
    }
    let scale = 1.0 / rows as f64;
    terms.proxy *= scale;
    terms.cause *= scale;
    terms.effect *= scale;
    terms.prior *= scale;
    terms.entropy *= scale;
    per_draw.iter_mut().for_each(|v| *v /= n as f64);
    let value = per_draw.iter().sum::<f64>() / m as f64;
    let std_error = if m > 1 {
        let var = per_draw.iter().map(|v| (v - value) * (v - value)).sum::<f64>() / (m - 1) as f64;
        (var / m as f64).sqrt()
    } else {
        0.0
    };

    if !value.is_finite() {
        return Err(Error::run(format!(
            "non-finite ELBO (proxy {}, cause {}, effect {}, prior {}, entropy {})",
            terms.proxy, terms.cause, terms.effect, terms.prior, terms.entropy
        )));
    }

    if backprop {
        let dz_w = proxy.backward_batch(store, &proxy_tape, &d_proxy);
        let dz_c = cause_head.backward_batch(store, &cause_tape, &d_cause);
        let d_eff_in = effect.backward_batch(store, &eff_tape, &d_eff);
        let mut d_mean = vec![0.0; n];
        let mut d_lv = vec![0.0; n];
        for i in 0..n {
            let (_, lv, _) = q[i];
            let half_sd = 0.5 * (0.5 * lv).exp();
            let mut dm = 0.0;
            let mut dl = 0.0;
            for j in 0..m {
                let r = i * m + j;
                let dz = dz_w[r] + dz_c[r] + d_eff_in[r * eff_width + 1] - weight * z[r];
                dm += dz;
                dl += dz * half_sd * noise.u[r] + weight * 0.5;
            }
            d_mean[i] = dm;
            d_lv[i] = dl;
        }
        let d_enc = encoder.raw_grad(store, &q, &d_mean, &d_lv);
        encoder.backward_batch(store, &enc_tape, &d_enc);
    }

    Ok(ElboEstimate {
        value,
        std_error,
        samples: m,
        terms,
    })
}
