use std::io::{Read, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::alpha::AlphaState;
use super::config::{AdaptOptimizer, DataSource, RunConfig};
use crate::error::{Error, Result};
use crate::latent::{elbo_backprop, elbo_with_noise, train_step, Direction, DirectionModel, ElboNoise};
use crate::ndiff::{sgd_step, AdamConfig, OptState};
use crate::scm::{
    bootstrap_batch, draw_transfer_mean, sample_dataset, DataTag, Dataset, FinitePool, PoolSlot, SplineMechanism,
};
use crate::seed;

/// Builds the mechanism described by the config's spline section.
pub fn mechanism(config: &RunConfig) -> Result<SplineMechanism> {
    let s = &config.spline;
    SplineMechanism::build(s.seed, s.knots, s.x_range, s.y_range)
}

/// Batch generator for one run.
#[derive(Debug, Clone)]
pub struct DataStream {
    mech: SplineMechanism,
    config: RunConfig,
    pool: Option<FinitePool>,
}

/// Which transfer distribution an episode used.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shift {
    Mean(f64),
    Pool(usize),
}

impl DataStream {
    pub fn new(config: &RunConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mech = mechanism(config)?;
        let pool = match config.data {
            DataSource::Infinite => None,
            DataSource::Finite {
                train_size,
                transfer_size,
                episode_size,
                n_transfers,
            } => Some(FinitePool::generate(
                &mech,
                &config.scm,
                train_size,
                transfer_size,
                n_transfers,
                episode_size,
                seed::derive_labeled(seed, "pool", 0),
            )?),
        };
        Ok(Self {
            mech,
            config: config.clone(),
            pool,
        })
    }

    pub fn mechanism(&self) -> &SplineMechanism {
        &self.mech
    }

    pub fn pool(&self) -> Option<&FinitePool> {
        self.pool.as_ref()
    }

    pub fn training_batch(&self, seed: u64) -> Result<Dataset> {
        match &self.pool {
            None => sample_dataset(
                &self.mech,
                &self.config.scm,
                0.0,
                self.config.samples,
                DataTag::Training,
                seed,
            ),
            Some(pool) => bootstrap_batch(pool, PoolSlot::Training, seed),
        }
    }

    pub fn transfer_batch(&self, seed: u64) -> Result<(Shift, Dataset)> {
        match &self.pool {
            None => {
                let mu = draw_transfer_mean(&self.config.scm, seed::derive(seed, 0));
                self.transfer_batch_at(mu, seed)
            }
            Some(pool) => {
                let k = seed::rng(seed::derive(seed, 0)).gen_range(0..pool.transfers().len());
                let batch = bootstrap_batch(pool, PoolSlot::Transfer(k), seed::derive(seed, 1))?;
                Ok((Shift::Pool(k), batch))
            }
        }
    }

    /// A transfer batch with the shift pinned to `mu` (infinite regime only).
    pub fn transfer_batch_at(&self, mu: f64, seed: u64) -> Result<(Shift, Dataset)> {
        if self.pool.is_some() {
            return Err(Error::config("a pinned transfer mean needs the infinite data source"));
        }
        let batch = sample_dataset(
            &self.mech,
            &self.config.scm,
            mu,
            self.config.samples,
            DataTag::Transfer { mu },
            seed::derive(seed, 1),
        )?;
        Ok((Shift::Mean(mu), batch))
    }
}

/// The two competing hypotheses of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelPair {
    pub xy: DirectionModel,
    pub yx: DirectionModel,
}

impl ModelPair {
    pub fn new(config: &RunConfig, seed: u64) -> Result<Self> {
        Ok(Self {
            xy: DirectionModel::new(Direction::XToY, &config.model, seed::derive_labeled(seed, "init", 0))?,
            yx: DirectionModel::new(Direction::YToX, &config.model, seed::derive_labeled(seed, "init", 1))?,
        })
    }
}

/// Per-iteration diagnostics of base training.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BaseTrace {
    /// Effect mean of the X->Y model at cause 0, latent 0, noise 0.
    pub yhat_xy: Vec<f64>,
    /// Same probe for the Y->X model.
    pub yhat_yx: Vec<f64>,
    pub elbo_xy: Vec<f64>,
    pub elbo_yx: Vec<f64>,
}

fn with_iteration<T>(r: Result<T>, what: &str, i: usize) -> Result<T> {
    r.map_err(|e| match e {
        Error::Run(msg) => Error::run(format!("{what} iteration {i}: {msg}")),
        other => other,
    })
}

/// Trains both hypotheses on training-distribution batches and records diagnostics.
pub fn train_base_traced(config: &RunConfig, stream: &DataStream, seed: u64) -> Result<(ModelPair, BaseTrace)> {
    let mut pair = ModelPair::new(config, seed)?;
    let adam = AdamConfig::with_lr(config.net_lr);
    let mut opt_xy = OptState::new(adam, pair.xy.store());
    let mut opt_yx = OptState::new(adam, pair.yx.store());
    let mut trace = BaseTrace::default();
    for i in 0..config.train_iters {
        let batch = stream.training_batch(seed::derive_labeled(seed, "base-data", i as u64))?;
        let noise_seed = seed::derive_labeled(seed, "base-noise", i as u64);
        let exy = with_iteration(
            train_step(&mut pair.xy, &mut opt_xy, &batch, config.mc_samples, noise_seed),
            "base training",
            i,
        )?;
        let eyx = with_iteration(
            train_step(&mut pair.yx, &mut opt_yx, &batch, config.mc_samples, noise_seed),
            "base training",
            i,
        )?;
        trace.elbo_xy.push(exy.value);
        trace.elbo_yx.push(eyx.value);
        trace.yhat_xy.push(pair.xy.conditional_mean(0.0, 0.0));
        trace.yhat_yx.push(pair.yx.conditional_mean(0.0, 0.0));
    }
    Ok((pair, trace))
}

pub fn train_base(config: &RunConfig, stream: &DataStream, seed: u64) -> Result<ModelPair> {
    train_base_traced(config, stream, seed).map(|(pair, _)| pair)
}

/// Outcome of adapting copies of both base models to one transfer distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransferEpisode {
    pub shift: Shift,
    /// Sum over the adaptation steps of the post-update ELBO, X->Y hypothesis.
    pub l_xy: f64,
    pub l_yx: f64,
}

/// Adapts fresh copies of `model` for `steps` steps on one batch with fixed draws and
/// returns the summed post-update ELBOs.
fn adapt_copy(config: &RunConfig, model: &DirectionModel, batch: &Dataset, noise: &ElboNoise) -> Result<f64> {
    let (steps, lr) = (config.adapt_steps, config.adapt_lr);
    let mut m = model.clone();
    let mut opt = match config.adapt_optimizer {
        AdaptOptimizer::Adam => Some(OptState::new(AdamConfig::with_lr(lr), m.store())),
        AdaptOptimizer::Sgd => None,
    };
    let mut total = 0.0;
    for t in 0..steps {
        m.store_mut().zero_grad();
        let before = elbo_backprop(&mut m, batch, noise)?;
        if t > 0 {
            total += before.value;
        }
        match opt.as_mut() {
            Some(opt) => opt.step(m.store_mut())?,
            None => sgd_step(m.store_mut(), lr)?,
        }
    }
    total += elbo_with_noise(&m, batch, noise)?.value;
    Ok(total)
}

/// Scores both hypotheses on `batch`; base models are never touched.
pub fn adapt_on(config: &RunConfig, base: &ModelPair, shift: Shift, batch: &Dataset, seed: u64) -> Result<TransferEpisode> {
    let noise = ElboNoise::draw(batch.len(), config.mc_samples, config.model.noise_dim, seed::derive(seed, 2));
    let l_xy = adapt_copy(config, &base.xy, batch, &noise)?;
    let l_yx = adapt_copy(config, &base.yx, batch, &noise)?;
    Ok(TransferEpisode { shift, l_xy, l_yx })
}

/// Draws a transfer distribution and scores both hypotheses on it.
pub fn adapt_episode(config: &RunConfig, stream: &DataStream, base: &ModelPair, seed: u64) -> Result<TransferEpisode> {
    let (shift, batch) = stream.transfer_batch(seed)?;
    adapt_on(config, base, shift, &batch, seed)
}

/// The `sigma(alpha)` path of one run together with the episode scores that drove it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaTrace {
    pub seed: u64,
    pub sigmas: Vec<f64>,
    pub elbo_xy: Vec<f64>,
    pub elbo_yx: Vec<f64>,
}

impl AlphaTrace {
    pub fn len(&self) -> usize {
        self.sigmas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigmas.is_empty()
    }

    pub fn final_sigma(&self) -> Option<f64> {
        self.sigmas.last().copied()
    }

    /// Replays the alpha descent over a fixed sequence of episode scores.
    pub fn from_scores(seed: u64, lr: f64, scores: &[(f64, f64)]) -> Self {
        let mut state = AlphaState::new(lr);
        let mut trace = Self {
            seed,
            sigmas: Vec::with_capacity(scores.len()),
            elbo_xy: Vec::with_capacity(scores.len()),
            elbo_yx: Vec::with_capacity(scores.len()),
        };
        for &(lxy, lyx) in scores {
            trace.push(&mut state, lxy, lyx);
        }
        trace
    }

    fn push(&mut self, state: &mut AlphaState, lxy: f64, lyx: f64) {
        self.sigmas.push(state.step(lxy, lyx));
        self.elbo_xy.push(lxy);
        self.elbo_yx.push(lyx);
    }

    pub const CSV_HEADER: [&'static str; 5] = ["run_id", "iteration", "sigma_alpha", "elbo_xy", "elbo_yx"];

    /// Writes rows `run_id,iteration,sigma_alpha,elbo_xy,elbo_yx` with 1-based iterations.
    pub fn write_csv<W: Write>(&self, run_id: usize, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let to_err = |e: csv::Error| Error::run(format!("trace csv: {e}"));
        w.write_record(Self::CSV_HEADER).map_err(to_err)?;
        for i in 0..self.len() {
            w.write_record([
                run_id.to_string(),
                (i + 1).to_string(),
                self.sigmas[i].to_string(),
                self.elbo_xy[i].to_string(),
                self.elbo_yx[i].to_string(),
            ])
            .map_err(to_err)?;
        }
        w.flush().map_err(|e| Error::run(format!("trace csv: {e}")))?;
        Ok(())
    }

    /// Parses a single-run trace CSV; returns the run id and the trace (seed unset).
    pub fn read_csv<R: Read>(input: R) -> Result<(usize, Self)> {
        let mut r = csv::Reader::from_reader(input);
        let bad = |msg: String| Error::Input(format!("trace csv: {msg}"));
        let header = r.headers().map_err(|e| bad(e.to_string()))?.clone();
        if header.iter().ne(Self::CSV_HEADER) {
            return Err(bad(format!("unexpected header {:?}", header.iter().collect::<Vec<_>>())));
        }
        let mut run_id = None;
        let mut trace = Self {
            seed: 0,
            sigmas: vec![],
            elbo_xy: vec![],
            elbo_yx: vec![],
        };
        for (row, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| bad(e.to_string()))?;
            let field = |i: usize| -> Result<&str> { rec.get(i).ok_or_else(|| bad(format!("row {row} too short"))) };
            let num = |i: usize| -> Result<f64> {
                field(i)?.parse().map_err(|e| bad(format!("row {row} column {i}: {e}")))
            };
            let id: usize = field(0)?.parse().map_err(|e| bad(format!("row {row} run_id: {e}")))?;
            let iter: usize = field(1)?.parse().map_err(|e| bad(format!("row {row} iteration: {e}")))?;
            if *run_id.get_or_insert(id) != id {
                return Err(bad(format!("row {row} mixes run ids")));
            }
            if iter != row + 1 {
                return Err(bad(format!("row {row} has iteration {iter}, expected {}", row + 1)));
            }
            trace.sigmas.push(num(2)?);
            trace.elbo_xy.push(num(3)?);
            trace.elbo_yx.push(num(4)?);
        }
        Ok((run_id.unwrap_or(0), trace))
    }
}

/// Base training followed by the alpha loop.
pub fn run_single(config: &RunConfig, seed: u64) -> Result<AlphaTrace> {
    run_single_traced(config, seed).map(|(trace, _)| trace)
}

/// [`run_single`] that also returns the base-training diagnostics.
pub fn run_single_traced(config: &RunConfig, seed: u64) -> Result<(AlphaTrace, BaseTrace)> {
    let stream = DataStream::new(config, seed)?;
    let (base, base_trace) = train_base_traced(config, &stream, seed)?;
    let mut state = AlphaState::new(config.alpha_lr);
    let mut trace = AlphaTrace {
        seed,
        sigmas: Vec::with_capacity(config.alpha_iters),
        elbo_xy: Vec::with_capacity(config.alpha_iters),
        elbo_yx: Vec::with_capacity(config.alpha_iters),
    };
    for i in 0..config.alpha_iters {
        let ep = with_iteration(
            adapt_episode(config, &stream, &base, seed::derive_labeled(seed, "episode", i as u64)),
            "alpha",
            i,
        )?;
        trace.push(&mut state, ep.l_xy, ep.l_yx);
    }
    Ok((trace, base_trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meta::{r_grad, r_loss, Profile};
    use proptest::prelude::{prop_assert, proptest};

    fn tiny() -> RunConfig {
        let mut c = RunConfig::profile(Profile::Fast);
        c.model.hidden = vec![4];
        c.samples = 20;
        c.mc_samples = 3;
        c.train_iters = 3;
        c.alpha_iters = 4;
        c.adapt_steps = 2;
        c
    }

    #[test]
    fn zero_training_iterations_gives_initial_models() {
        let mut c = tiny();
        c.train_iters = 0;
        let stream = DataStream::new(&c, 5).unwrap();
        assert_eq!(train_base(&c, &stream, 5).unwrap(), ModelPair::new(&c, 5).unwrap());
    }

    #[test]
    fn identical_seeds_identical_runs() {
        let c = tiny();
        let stream = DataStream::new(&c, 9).unwrap();
        assert_eq!(train_base(&c, &stream, 9).unwrap(), train_base(&c, &stream, 9).unwrap());
        assert_eq!(run_single(&c, 9).unwrap(), run_single(&c, 9).unwrap());
        assert_ne!(run_single(&c, 9).unwrap(), run_single(&c, 10).unwrap());
    }

    #[test]
    fn adaptation_leaves_base_untouched() {
        let c = tiny();
        let stream = DataStream::new(&c, 1).unwrap();
        let base = train_base(&c, &stream, 1).unwrap();
        let before = base.clone();
        adapt_episode(&c, &stream, &base, 2).unwrap();
        assert_eq!(base, before);
    }

    #[test]
    fn zero_adapt_rate_sums_base_elbo() {
        let mut c = tiny();
        c.adapt_lr = 0.0;
        c.adapt_steps = 4;
        let stream = DataStream::new(&c, 3).unwrap();
        let base = train_base(&c, &stream, 3).unwrap();
        let (shift, batch) = stream.transfer_batch(4).unwrap();
        let ep = adapt_on(&c, &base, shift, &batch, 4).unwrap();
        let noise = ElboNoise::draw(batch.len(), c.mc_samples, c.model.noise_dim, seed::derive(4, 2));
        let e = elbo_with_noise(&base.xy, &batch, &noise).unwrap().value;
        assert!((ep.l_xy - 4.0 * e).abs() < 1e-9 * e.abs().max(1.0));
    }

    #[test]
    fn finite_source_bootstraps_episode_size() {
        let mut c = tiny();
        c.data = DataSource::Finite {
            train_size: 30,
            transfer_size: 13,
            episode_size: 13,
            n_transfers: 2,
        };
        let stream = DataStream::new(&c, 0).unwrap();
        let (shift, batch) = stream.transfer_batch(1).unwrap();
        assert!(matches!(shift, Shift::Pool(k) if k < 2));
        assert_eq!(batch.len(), 13);
        assert!(stream.transfer_batch_at(0.0, 1).is_err());
        let t = run_single(&c, 0).unwrap();
        assert_eq!(t.len(), 4);
        assert!(t.sigmas.iter().all(|s| *s > 0.0 && *s < 1.0));
    }

    #[test]
    fn csv_round_trip() {
        let t = AlphaTrace::from_scores(0, 0.5, &[(-1.0, -2.0), (-3.5, -1.25), (0.1, 0.1)]);
        let mut buf = Vec::new();
        t.write_csv(7, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("run_id,iteration,sigma_alpha,elbo_xy,elbo_yx\n7,1,"));
        let (id, back) = AlphaTrace::read_csv(buf.as_slice()).unwrap();
        assert_eq!(id, 7);
        assert_eq!(back, t);
    }

    #[test]
    fn mirrored_scores_mirror_the_trace() {
        let scores: Vec<(f64, f64)> = (0..50).map(|i| ((i as f64).sin() * 3.0, (i as f64 * 0.7).cos())).collect();
        let swapped: Vec<(f64, f64)> = scores.iter().map(|&(a, b)| (b, a)).collect();
        let mut s1 = AlphaState::new(0.5);
        let mut s2 = AlphaState::new(0.5);
        for (&(a, b), &(c, d)) in scores.iter().zip(&swapped) {
            s1.step(a, b);
            s2.step(c, d);
            assert_eq!(s1.alpha.to_bits(), (-s2.alpha).to_bits());
            assert!((s1.sigma() - (1.0 - s2.sigma())).abs() < 1e-15);
        }
    }

    #[test]
    fn gradient_matches_finite_differences_on_random_triples() {
        let mut rng = seed::rng(42);
        let h = 1e-5;
        for _ in 0..1000 {
            let a = rng.gen_range(-6.0..6.0);
            let lxy = rng.gen_range(-50.0..50.0);
            let lyx = lxy + rng.gen_range(-8.0..8.0);
            let fd = (r_loss(a + h, lxy, lyx) - r_loss(a - h, lxy, lyx)) / (2.0 * h);
            let g = r_grad(a, lxy, lyx);
            assert!((fd - g).abs() <= 1e-6 * g.abs().max(1e-3), "a={a} lxy={lxy} lyx={lyx}: {fd} vs {g}");
        }
    }

    proptest! {
        #[test]
        fn dominant_hypothesis_drives_sigma_up(gaps in proptest::collection::vec(1e-3f64..20.0, 1..200)) {
            let scores: Vec<(f64, f64)> = gaps.iter().map(|g| (-10.0 + g, -10.0)).collect();
            let t = AlphaTrace::from_scores(0, 0.5, &scores);
            let mut prev = 0.5;
            for s in &t.sigmas {
                prop_assert!(*s > prev);
                prev = *s;
            }
        }
    }
}
