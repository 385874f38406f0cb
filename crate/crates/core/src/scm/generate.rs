use rand::Rng;
use rand_distr::{Beta, Distribution, StandardNormal, Uniform};

use super::config::{Latent, Scenario, ScmConfig};
use super::dataset::{DataTag, Dataset};
use super::spline::SplineMechanism;
use crate::error::{Error, Result};
use crate::seed;

/// `n` i.i.d. draws of the latent confounder.
pub fn sample_latent(config: &ScmConfig, n: usize, seed: u64) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::config("latent sample size must be >= 1"));
    }
    config.latent.validate()?;
    let mut rng = seed::rng(seed);
    Ok(match config.latent {
        Latent::Normal => (0..n).map(|_| rng.sample(StandardNormal)).collect(),
        Latent::Beta { a, b } => {
            let dist = Beta::new(a, b).map_err(|e| Error::config(format!("latent: {e}")))?;
            let shift = a / (a + b);
            (0..n).map(|_| dist.sample(&mut rng) - shift).collect()
        }
    })
}

/// One dataset from the structural model with the cause's exogenous mean set to `mu`.
///
/// For `y_causes_x` the roles of the variables are mirrored; for `no_causality`
/// both variables are exogenous plus the shared latent, each shifted by `mu`.
pub fn sample_dataset(
    mech: &SplineMechanism,
    config: &ScmConfig,
    mu: f64,
    n: usize,
    tag: DataTag,
    seed: u64,
) -> Result<Dataset> {
    if n < 2 {
        return Err(Error::config(format!("sample size must be >= 2, got {n}")));
    }
    config.validate()?;
    let z = sample_latent(config, n, seed::derive_labeled(seed, "latent", 0))?;
    let mut rng = seed::rng(seed::derive_labeled(seed, "noise", 0));
    let sd = config.x_noise_var.sqrt();
    let mut normal = || -> f64 { rng.sample(StandardNormal) };

    let mut cause = Vec::with_capacity(n);
    let mut effect = Vec::with_capacity(n);
    let mut w = Vec::with_capacity(n);
    for &zi in &z {
        let c = mu + sd * normal() + zi;
        let e = match config.scenario {
            Scenario::NoCausality => mu + sd * normal() + zi,
            _ => mech.eval(c) + zi + config.y_noise_std * normal(),
        };
        cause.push(c);
        effect.push(e);
        w.push(zi + config.proxy_noise_std * normal());
    }
    let (x, y) = match config.scenario {
        Scenario::YCausesX => (effect, cause),
        _ => (cause, effect),
    };
    Dataset::new(x, y, w, tag, seed)
}

/// Uniform draw of the transfer-distribution mean.
pub fn draw_transfer_mean(config: &ScmConfig, seed: u64) -> f64 {
    let [lo, hi] = config.transfer_range;
    if lo >= hi {
        return lo;
    }
    seed::rng(seed).sample(Uniform::new_inclusive(lo, hi))
}

/// Selects one of the fixed datasets of a [`FinitePool`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolSlot {
    Training,
    Transfer(usize),
}

/// Fixed finite datasets resampled with replacement each episode.
#[derive(Debug, Clone, PartialEq)]
pub struct FinitePool {
    training: Dataset,
    transfers: Vec<Dataset>,
    batch_size: usize,
}

impl FinitePool {
    pub fn new(training: Dataset, transfers: Vec<Dataset>, batch_size: usize) -> Result<Self> {
        if batch_size == 0 {
            return Err(Error::config("pool episode batch size must be >= 1"));
        }
        if training.is_empty() || transfers.iter().any(Dataset::is_empty) {
            return Err(Error::config("pool datasets must be non-empty"));
        }
        Ok(Self {
            training,
            transfers,
            batch_size,
        })
    }

    /// Draws the training pool at mean 0 and `n_transfers` transfer pools with their own means.
    pub fn generate(
        mech: &SplineMechanism,
        config: &ScmConfig,
        train_size: usize,
        transfer_size: usize,
        n_transfers: usize,
        batch_size: usize,
        seed: u64,
    ) -> Result<Self> {
        if n_transfers == 0 {
            return Err(Error::config("pool needs at least one transfer dataset"));
        }
        let training = sample_dataset(
            mech,
            config,
            0.0,
            train_size,
            DataTag::Training,
            seed::derive_labeled(seed, "pool-train", 0),
        )?;
        let transfers = (0..n_transfers as u64)
            .map(|k| {
                let mu = draw_transfer_mean(config, seed::derive_labeled(seed, "pool-mu", k));
                sample_dataset(
                    mech,
                    config,
                    mu,
                    transfer_size,
                    DataTag::Transfer { mu },
                    seed::derive_labeled(seed, "pool-transfer", k),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(training, transfers, batch_size)
    }

    pub fn training(&self) -> &Dataset {
        &self.training
    }

    pub fn transfers(&self) -> &[Dataset] {
        &self.transfers
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }
}

/// A batch of the pool's episode size drawn i.i.d. with replacement from one slot.
pub fn bootstrap_batch(pool: &FinitePool, which: PoolSlot, seed: u64) -> Result<Dataset> {
    let source = match which {
        PoolSlot::Training => &pool.training,
        PoolSlot::Transfer(i) => pool.transfers.get(i).ok_or_else(|| {
            Error::config(format!(
                "transfer index {i} out of range ({} transfer datasets)",
                pool.transfers.len()
            ))
        })?,
    };
    let mut rng = seed::rng(seed);
    let dist = Uniform::new(0, source.len());
    let idx: Vec<usize> = (0..pool.batch_size).map(|_| rng.sample(dist)).collect();
    Ok(source.select(&idx))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean_var(v: &[f64]) -> (f64, f64) {
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        (m, v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n)
    }

    fn corr(a: &[f64], b: &[f64]) -> f64 {
        let (ma, va) = mean_var(a);
        let (mb, vb) = mean_var(b);
        let cov = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / a.len() as f64;
        cov / (va * vb).sqrt()
    }

    fn mech() -> SplineMechanism {
        SplineMechanism::build(0, 8, [-8.0, 8.0], [-4.0, 4.0]).unwrap()
    }

    #[test]
    fn normal_latent_moments() {
        let z = sample_latent(&ScmConfig::default(), 100_000, 3).unwrap();
        let (m, v) = mean_var(&z);
        assert!(m.abs() < 0.02 && (v - 1.0).abs() < 0.05, "{m} {v}");
    }

    #[test]
    fn beta_latents_are_recentred() {
        let cfg = ScmConfig {
            latent: Latent::Beta { a: 0.5, b: 0.5 },
            ..ScmConfig::default()
        };
        let z = sample_latent(&cfg, 100_000, 4).unwrap();
        let (m, _) = mean_var(&z);
        assert!(m.abs() < 0.02);
        assert!(z.iter().all(|v| (-0.5..=0.5).contains(v)));

        let cfg = ScmConfig {
            latent: Latent::Beta { a: 3.0, b: 3.0 },
            ..ScmConfig::default()
        };
        let z = sample_latent(&cfg, 100_000, 5).unwrap();
        let (m, v) = mean_var(&z);
        let sd = (1.0f64 / 28.0).sqrt();
        assert!(m.abs() < 4.0 * sd / (z.len() as f64).sqrt());
        assert!((v - 1.0 / 28.0).abs() < 0.005);
    }

    #[test]
    fn invalid_latent_rejected() {
        let cfg = ScmConfig {
            latent: Latent::Beta { a: 0.0, b: 1.0 },
            ..ScmConfig::default()
        };
        assert!(matches!(sample_latent(&cfg, 10, 0), Err(Error::Config(_))));
        assert!(sample_latent(&ScmConfig::default(), 0, 0).is_err());
    }

    #[test]
    fn proxy_without_noise_equals_latent() {
        let cfg = ScmConfig {
            proxy_noise_std: 0.0,
            ..ScmConfig::default()
        };
        let d = sample_dataset(&mech(), &cfg, 0.0, 500, DataTag::Training, 9).unwrap();
        let z = sample_latent(&cfg, 500, seed::derive_labeled(9, "latent", 0)).unwrap();
        assert_eq!(d.w, z);
        assert!((corr(&d.w, &z) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cause_variance_adds_latent_variance() {
        let d = sample_dataset(&mech(), &ScmConfig::default(), 0.0, 100_000, DataTag::Training, 10).unwrap();
        let (_, v) = mean_var(&d.x);
        assert!((v - 3.0).abs() < 0.1, "{v}");
    }

    #[test]
    fn mechanism_holds_exactly_and_reverse_mirrors() {
        let m = mech();
        let cfg = ScmConfig::default();
        let d = sample_dataset(&m, &cfg, 1.5, 200, DataTag::Transfer { mu: 1.5 }, 1).unwrap();
        let z = sample_latent(&cfg, 200, seed::derive_labeled(1, "latent", 0)).unwrap();
        for i in 0..d.len() {
            assert!((d.y[i] - m.eval(d.x[i]) - z[i]).abs() < 1e-12);
        }
        let rev = ScmConfig {
            scenario: Scenario::YCausesX,
            ..cfg.clone()
        };
        let r = sample_dataset(&m, &rev, 1.5, 200, DataTag::Transfer { mu: 1.5 }, 1).unwrap();
        assert_eq!(r.x, d.y);
        assert_eq!(r.y, d.x);
    }

    #[test]
    fn no_causality_is_conditionally_independent() {
        let cfg = ScmConfig {
            scenario: Scenario::NoCausality,
            ..ScmConfig::default()
        };
        let n = 100_000;
        let d = sample_dataset(&mech(), &cfg, 0.0, n, DataTag::Training, 12).unwrap();
        let z = sample_latent(&cfg, n, seed::derive_labeled(12, "latent", 0)).unwrap();
        let (rxy, rxz, ryz) = (corr(&d.x, &d.y), corr(&d.x, &z), corr(&d.y, &z));
        let partial = (rxy - rxz * ryz) / ((1.0 - rxz * rxz) * (1.0 - ryz * ryz)).sqrt();
        assert!(partial.abs() < 0.02, "{partial}");
        assert!(rxy > 0.2, "marginal dependence through z expected, got {rxy}");
    }

    #[test]
    fn transfer_mean_draws() {
        let degenerate = ScmConfig {
            transfer_range: [0.0, 0.0],
            ..ScmConfig::default()
        };
        assert_eq!(draw_transfer_mean(&degenerate, 5), 0.0);
        let cfg = ScmConfig::default();
        let draws: Vec<f64> = (0..100_000).map(|s| draw_transfer_mean(&cfg, s)).collect();
        let (m, _) = mean_var(&draws);
        assert!(m.abs() < 0.05);
        assert!(draws.iter().all(|v| (-4.0..=4.0).contains(v)));
        assert_eq!(draw_transfer_mean(&cfg, 77), draw_transfer_mean(&cfg, 77));
    }

    #[test]
    fn bootstrap_degenerate_and_errors() {
        let one = Dataset::new(vec![1.0], vec![2.0], vec![3.0], DataTag::Training, 0).unwrap();
        let pool = FinitePool::new(one.clone(), vec![one], 5).unwrap();
        let b = bootstrap_batch(&pool, PoolSlot::Training, 1).unwrap();
        assert_eq!(b.x, vec![1.0; 5]);
        assert_eq!(b.w, vec![3.0; 5]);
        assert!(matches!(
            bootstrap_batch(&pool, PoolSlot::Transfer(1), 1),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn bootstrap_inclusion_fraction() {
        let n = 100;
        let d = Dataset::new(
            (0..n).map(|i| i as f64).collect(),
            vec![0.0; n],
            vec![0.0; n],
            DataTag::Training,
            0,
        )
        .unwrap();
        let pool = FinitePool::new(d.clone(), vec![d], n).unwrap();
        let trials = 2000;
        let mut total = 0.0;
        let mut previous: Option<Vec<f64>> = None;
        for s in 0..trials {
            let b = bootstrap_batch(&pool, PoolSlot::Training, s).unwrap();
            let mut seen = vec![false; n];
            b.x.iter().for_each(|&v| seen[v as usize] = true);
            total += seen.iter().filter(|&&s| s).count() as f64 / n as f64;
            if let Some(p) = &previous {
                assert_ne!(p, &b.x);
            }
            previous = Some(b.x);
        }
        let expected = 1.0 - (1.0 - 1.0 / n as f64).powi(n as i32);
        assert!((total / trials as f64 - expected).abs() < 0.02);
    }

    #[test]
    fn generation_is_pure_in_seed() {
        let cfg = ScmConfig::default();
        let a = sample_dataset(&mech(), &cfg, 0.5, 50, DataTag::Training, 3).unwrap();
        let b = sample_dataset(&mech(), &cfg, 0.5, 50, DataTag::Training, 3).unwrap();
        assert_eq!(a, b);
        let p = FinitePool::generate(&mech(), &cfg, 30, 15, 3, 10, 8).unwrap();
        assert_eq!(p, FinitePool::generate(&mech(), &cfg, 30, 15, 3, 10, 8).unwrap());
        for t in p.transfers() {
            let DataTag::Transfer { mu } = t.tag else { panic!() };
            assert!((-4.0..=4.0).contains(&mu));
        }
    }
}
