mod common;

use causal_meta::latent::{elbo, reparam_sample, train_step, Direction, DirectionModel, ModelConfig};
use causal_meta::meta::{mechanism, Profile, RunConfig};
use causal_meta::ndiff::{AdamConfig, OptState};
use causal_meta::scm::{sample_dataset, sample_latent, DataTag, Dataset, ScmConfig};
use causal_meta::seed;

/// Two-sample Kolmogorov-Smirnov statistic.
fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

#[test]
fn ks_statistic_examples() {
    assert_eq!(ks_statistic(&[1.0, 2.0], &[1.0, 2.0]), 0.0);
    assert_eq!(ks_statistic(&[0.0, 1.0], &[5.0, 6.0]), 1.0);
    assert_eq!(ks_statistic(&[0.0, 2.0], &[1.0, 3.0]), 0.5);
}

/// `y - f(x) - z` for a dataset generated with `seed` (the latent stream is re-derived
/// the same way the generator derives it).
fn residuals(run: &RunConfig, mu: f64, n: usize, seed_value: u64) -> Vec<f64> {
    let mech = mechanism(run).unwrap();
    let d = sample_dataset(&mech, &run.scm, mu, n, DataTag::Training, seed_value).unwrap();
    let z = sample_latent(&run.scm, n, seed::derive_labeled(seed_value, "latent", 0)).unwrap();
    (0..n).map(|i| d.y[i] - mech.eval(d.x[i]) - z[i]).collect()
}

#[test]
fn mechanism_residual_is_invariant_under_transfer() {
    let mut run = RunConfig::profile(Profile::Fast);
    run.scm.y_noise_std = 0.5;
    let n = 10_000;
    let train = residuals(&run, 0.0, n, 1);
    // 1% critical value of the two-sample statistic for equal sizes.
    let critical = 1.628 * (2.0 / n as f64).sqrt();
    for (k, mu) in [-4.0, -1.5, 2.5, 4.0].into_iter().enumerate() {
        let shifted = residuals(&run, mu, n, 10 + k as u64);
        let d = ks_statistic(&train, &shifted);
        assert!(d < critical, "mu {mu}: D = {d}, critical {critical}");
    }
    // The check has power: a residual off by the mechanism's slope is detected.
    let mech = mechanism(&run).unwrap();
    let d = sample_dataset(&mech, &run.scm, 3.0, n, DataTag::Training, 99).unwrap();
    let z = sample_latent(&run.scm, n, seed::derive_labeled(99, "latent", 0)).unwrap();
    let wrong: Vec<f64> = (0..n).map(|i| d.y[i] - z[i]).collect();
    let base: Vec<f64> = {
        let d0 = sample_dataset(&mech, &run.scm, 0.0, n, DataTag::Training, 98).unwrap();
        let z0 = sample_latent(&run.scm, n, seed::derive_labeled(98, "latent", 0)).unwrap();
        (0..n).map(|i| d0.y[i] - z0[i]).collect()
    };
    assert!(ks_statistic(&base, &wrong) > critical);
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma) * (x - ma)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb) * (y - mb)).sum();
    cov / (va * vb).sqrt()
}

#[test]
fn encoder_recovers_latent_on_noiseless_proxy() {
    let scm = ScmConfig {
        proxy_noise_std: 0.0,
        x_noise_var: 0.25,
        ..ScmConfig::default()
    };
    let run = RunConfig {
        scm,
        ..RunConfig::profile(Profile::Fast)
    };
    let mech = mechanism(&run).unwrap();
    let mut model = DirectionModel::new(Direction::XToY, &run.model, 4).unwrap();
    let mut opt = OptState::new(AdamConfig::with_lr(1e-2), model.store());
    for step in 0..400 {
        let batch = sample_dataset(&mech, &run.scm, 0.0, 200, DataTag::Training, 1000 + step).unwrap();
        train_step(&mut model, &mut opt, &batch, 10, step).unwrap();
    }
    let n = 2000;
    let d = sample_dataset(&mech, &run.scm, 0.0, n, DataTag::Training, 7).unwrap();
    let z = sample_latent(&run.scm, n, seed::derive_labeled(7, "latent", 0)).unwrap();
    let means: Vec<f64> = model.encode(&d.x).into_iter().map(|(m, _)| m).collect();
    let r = pearson(&means, &z);
    // The prior is symmetric, so the latent is identified only up to sign.
    assert!(r.abs() > 0.7, "corr = {r}");
}

#[test]
fn reparameterized_gradient_of_second_moment() {
    let m = 100_000;
    let d = reparam_sample(0.5, 1.0, m, 3).unwrap();
    let var = d.z.iter().map(|z| (z - 0.5) * (z - 0.5)).sum::<f64>() / m as f64;
    assert!((var - 1.0).abs() < 0.05);
    // d/d mean of mean(z^2) pulls back 2 z / m through every draw.
    let dz: Vec<f64> = d.z.iter().map(|z| 2.0 * z / m as f64).collect();
    let (d_mean, _) = d.pullback(&dz);
    assert!((d_mean - 1.0).abs() < 0.05, "{d_mean}");
}

fn model_with_prior_encoder(seed_value: u64) -> DirectionModel {
    let mut model = DirectionModel::new(Direction::XToY, &ModelConfig::default(), seed_value).unwrap();
    let layers = model.encoder().mlp().layer_params();
    let store = model.store_mut();
    for (w, b) in layers {
        store.value_mut(w).iter_mut().for_each(|v| *v = 0.0);
        store.value_mut(b).iter_mut().for_each(|v| *v = 0.0);
    }
    model
}

#[test]
fn entropy_identity_when_encoder_is_the_prior() {
    let model = model_with_prior_encoder(5);
    let d = common::fast_data(50, 5);
    for m in [1, 10, 300] {
        let e = elbo(&model, &d, m, 2).unwrap();
        let gap = e.terms.prior + e.terms.entropy;
        assert!(gap.abs() <= 3.0 / (m as f64).sqrt() * 1e-9 + 1e-12, "m {m}: {gap}");
    }
}

#[test]
fn estimates_with_m_and_4m_draws_agree() {
    let d: Dataset = common::fast_data(100, 8);
    for s in 0..5 {
        let model = DirectionModel::new(Direction::YToX, &ModelConfig::default(), s).unwrap();
        let a = elbo(&model, &d, 25, 100 + s).unwrap();
        let b = elbo(&model, &d, 100, 200 + s).unwrap();
        let combined = (a.std_error.powi(2) + b.std_error.powi(2)).sqrt();
        assert!((a.value - b.value).abs() <= 3.0 * combined, "seed {s}: {a:?} vs {b:?}");
    }
}

/// Moving averages (window 50) of the training ELBO on one fixed dataset, taken at
/// the end of each window, with their Monte-Carlo standard errors.
fn smoothed_curve(seed_value: u64) -> Vec<(f64, f64)> {
    let run = RunConfig::profile(Profile::Fast);
    let batch = common::fast_data(run.samples, seed::derive_labeled(seed_value, "data", 0));
    let mut model = DirectionModel::new(Direction::XToY, &run.model, seed_value).unwrap();
    let mut opt = OptState::new(AdamConfig::with_lr(run.net_lr), model.store());
    let values: Vec<(f64, f64)> = (0..500)
        .map(|step| {
            let s = seed::derive(seed_value, step);
            let e = train_step(&mut model, &mut opt, &batch, run.mc_samples, s).unwrap();
            (e.value, e.std_error)
        })
        .collect();
    values
        .chunks(50)
        .map(|w| {
            let n = w.len() as f64;
            let mean = w.iter().map(|v| v.0).sum::<f64>() / n;
            let se = w.iter().map(|v| v.1 * v.1).sum::<f64>().sqrt() / n;
            (mean, se)
        })
        .collect()
}

#[test]
fn smoothed_training_elbo_does_not_decrease() {
    let monotone = (0..10)
        .filter(|&s| {
            // A later window may sit below an earlier one only by Monte-Carlo noise.
            smoothed_curve(s).windows(2).all(|w| {
                let ((a, sa), (b, sb)) = (w[0], w[1]);
                b >= a - 3.0 * (sa * sa + sb * sb).sqrt()
            })
        })
        .count();
    assert!(monotone >= 9, "{monotone}/10 monotone");
}
