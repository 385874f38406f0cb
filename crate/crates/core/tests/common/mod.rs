#![allow(dead_code)]

use causal_meta::latent::{elbo, train_step, Direction, DirectionModel, ModelConfig};
use causal_meta::meta::{mechanism, Profile, RunConfig};
use causal_meta::ndiff::{AdamConfig, OptState};
use causal_meta::scm::{sample_dataset, DataTag, Dataset};

/// Training-distribution sample of the fast profile's x_causes_y model.
pub fn fast_data(n: usize, seed: u64) -> Dataset {
    let run = RunConfig::profile(Profile::Fast);
    let mech = mechanism(&run).unwrap();
    sample_dataset(&mech, &run.scm, 0.0, n, DataTag::Training, seed).unwrap()
}

/// Closed-form mean log-likelihood per observation of a model built from
/// `ModelConfig::linear_gaussian`. With linear heads and a single shared-scale
/// Gaussian effect, (w, cause, effect) is jointly Gaussian once z ~ N(0, 1) is
/// integrated out, so its density follows from probing each head at a few points.
pub fn exact_log_likelihood(model: &DirectionModel, data: &Dataset) -> f64 {
    let store = model.store();
    let line = |head: &causal_meta::latent::GaussHead| {
        let (b, var) = head.eval(store, &[0.0]).unwrap();
        let (one, _) = head.eval(store, &[1.0]).unwrap();
        (one - b, b, var)
    };
    let (aw, bw, vw) = line(model.proxy());
    let (ac, bc, vc) = line(model.cause_head());
    let eff = |c: f64, z: f64| {
        let p = model.effect().forward(store, &[c, z], &[]).unwrap();
        assert_eq!(p.k(), 1, "oracle needs a single-component effect");
        (p.means()[0], p.stds()[0])
    };
    let (g, se) = eff(0.0, 0.0);
    let slope_c = eff(1.0, 0.0).0 - g;
    let slope_z = eff(0.0, 1.0).0 - g;

    let load = [aw, ac, slope_c * ac + slope_z];
    let mean = [bw, bc, slope_c * bc + g];
    let mut cov = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            cov[i][j] = load[i] * load[j];
        }
    }
    cov[0][0] += vw;
    cov[1][1] += vc;
    cov[1][2] += slope_c * vc;
    cov[2][1] += slope_c * vc;
    cov[2][2] += slope_c * slope_c * vc + se * se;

    // Cholesky of the 3x3 covariance.
    let mut l = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                l[i][i] = (cov[i][i] - s).sqrt();
            } else {
                l[i][j] = (cov[i][j] - s) / l[j][j];
            }
        }
    }
    let log_det: f64 = 2.0 * (0..3).map(|i| l[i][i].ln()).sum::<f64>();
    let (cause, effect) = model.direction().split(&data.x, &data.y);
    let mut total = 0.0;
    for i in 0..data.len() {
        let r = [data.w[i] - mean[0], cause[i] - mean[1], effect[i] - mean[2]];
        let mut u = [0.0; 3];
        for a in 0..3 {
            let s: f64 = (0..a).map(|k| l[a][k] * u[k]).sum();
            u[a] = (r[a] - s) / l[a][a];
        }
        let quad: f64 = u.iter().map(|v| v * v).sum();
        total += -0.5 * (3.0 * (2.0 * std::f64::consts::PI).ln() + log_det + quad);
    }
    total / data.len() as f64
}

/// ELBO bound and gap shrinkage against the closed-form marginal likelihood.
/// Returns (bound violations, runs whose gap shrank by at least half).
pub fn bound_and_shrink(seeds: u64, steps: usize) -> (usize, usize) {
    let mut violations = 0;
    let mut shrunk = 0;
    for seed in 0..seeds {
        let mut model = DirectionModel::new(Direction::XToY, &ModelConfig::linear_gaussian(), seed).unwrap();
        let d = fast_data(200, 10_000 + seed);
        let gap = |model: &DirectionModel, s: u64, violations: &mut usize| {
            let e = elbo(model, &d, 300, s).unwrap();
            let exact = exact_log_likelihood(model, &d);
            if e.value > exact + 3.0 * e.std_error {
                *violations += 1;
            }
            exact - e.value
        };
        let before = gap(&model, seed, &mut violations);
        let mut opt = OptState::new(AdamConfig::with_lr(1e-2), model.store());
        for step in 0..steps {
            train_step(&mut model, &mut opt, &d, 30, seed * 1_000_003 + step as u64).unwrap();
        }
        let after = gap(&model, seed + 1, &mut violations);
        if after <= 0.5 * before {
            shrunk += 1;
        }
    }
    (violations, shrunk)
}
