/// `ln(sqrt(2 pi))`.
pub const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Bounds applied to every predicted log standard deviation.
pub const LOG_STD_MIN: f64 = -7.0;
pub const LOG_STD_MAX: f64 = 3.0;

/// Largest supported mixture size.
pub const MAX_COMPONENTS: usize = 32;

/// Clamps a raw log-std; the flag reports whether the value was inside the bounds
/// (and so should receive gradient).
#[inline]
pub fn clamp_log_std(raw: f64) -> (f64, bool) {
    if raw < LOG_STD_MIN {
        (LOG_STD_MIN, false)
    } else if raw > LOG_STD_MAX {
        (LOG_STD_MAX, false)
    } else {
        (raw, true)
    }
}

/// Parameters of a univariate Gaussian mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmParams {
    logits: Vec<f64>,
    means: Vec<f64>,
    log_stds: Vec<f64>,
}

impl GmmParams {
    /// Builds a mixture from unnormalized logits, means, and log-stds (clamped here).
    pub fn new(logits: Vec<f64>, means: Vec<f64>, log_stds: Vec<f64>) -> Self {
        let k = logits.len();
        assert!(k >= 1 && k <= MAX_COMPONENTS, "mixture size {k} out of range");
        assert!(means.len() == k && log_stds.len() == k, "mixture parameter lengths differ");
        let log_stds = log_stds.into_iter().map(|s| clamp_log_std(s).0).collect();
        Self {
            logits,
            means,
            log_stds,
        }
    }

    pub fn k(&self) -> usize {
        self.logits.len()
    }

    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn log_stds(&self) -> &[f64] {
        &self.log_stds
    }

    /// Softmax-normalized mixture weights.
    pub fn weights(&self) -> Vec<f64> {
        let max = self.logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = self.logits.iter().map(|a| (a - max).exp()).collect();
        let s: f64 = e.iter().sum();
        e.into_iter().map(|v| v / s).collect()
    }

    pub fn stds(&self) -> Vec<f64> {
        self.log_stds.iter().map(|s| s.exp()).collect()
    }

    /// `ln sum_i pi_i N(value; mu_i, sigma_i^2)`, evaluated with log-sum-exp.
    pub fn log_density(&self, value: f64) -> f64 {
        let k = self.k();
        let mut scratch = [0.0; MAX_COMPONENTS * 3];
        let (gl, rest) = scratch.split_at_mut(MAX_COMPONENTS);
        let (gm, gs) = rest.split_at_mut(MAX_COMPONENTS);
        log_density_grad(
            &self.logits,
            &self.means,
            &self.log_stds,
            value,
            &mut gl[..k],
            &mut gm[..k],
            &mut gs[..k],
        )
    }

    /// Mixture mean `sum pi_i mu_i / sum pi_i`.
    pub fn conditional_mean(&self) -> f64 {
        mixture_mean(&self.weights(), &self.means)
    }
}

/// Weighted mean `sum w_i mu_i / sum w_i`; the weights need not be normalized.
pub fn mixture_mean(weights: &[f64], means: &[f64]) -> f64 {
    let num: f64 = weights.iter().zip(means).map(|(w, m)| w * m).sum();
    let den: f64 = weights.iter().sum();
    num / den
}

/// `ln(e^a + e^b)` without overflow.
#[inline]
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Log-density of a mixture and its gradient with respect to the logits, means, and
/// (already clamped) log-stds. Gradients are written, not accumulated.
#[inline]
pub fn log_density_grad(
    logits: &[f64],
    means: &[f64],
    log_stds: &[f64],
    value: f64,
    g_logits: &mut [f64],
    g_means: &mut [f64],
    g_log_stds: &mut [f64],
) -> f64 {
    let k = logits.len();
    debug_assert!(k <= MAX_COMPONENTS);
    let a_max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut ea = [0.0; MAX_COMPONENTS];
    let mut a_sum = 0.0;
    for j in 0..k {
        ea[j] = (logits[j] - a_max).exp();
        a_sum += ea[j];
    }
    let log_norm = a_max + a_sum.ln();

    let mut comp = [0.0; MAX_COMPONENTS];
    let mut zsq = [0.0; MAX_COMPONENTS];
    let mut inv_std = [0.0; MAX_COMPONENTS];
    let mut c_max = f64::NEG_INFINITY;
    for j in 0..k {
        inv_std[j] = (-log_stds[j]).exp();
        let z = (value - means[j]) * inv_std[j];
        zsq[j] = z * z;
        comp[j] = logits[j] - log_norm - HALF_LN_2PI - log_stds[j] - 0.5 * zsq[j];
        c_max = c_max.max(comp[j]);
    }
    let mut ec = [0.0; MAX_COMPONENTS];
    let mut c_sum = 0.0;
    for j in 0..k {
        ec[j] = (comp[j] - c_max).exp();
        c_sum += ec[j];
    }
    let total = c_max + c_sum.ln();

    let inv_c = 1.0 / c_sum;
    let inv_a = 1.0 / a_sum;
    for j in 0..k {
        let resp = ec[j] * inv_c;
        g_logits[j] = resp - ea[j] * inv_a;
        g_means[j] = resp * (value - means[j]) * inv_std[j] * inv_std[j];
        g_log_stds[j] = resp * (zsq[j] - 1.0);
    }
    total
}

/// Log-density of a single Gaussian parameterized by mean and log-variance.
#[inline]
pub fn normal_log_density(value: f64, mean: f64, log_var: f64) -> f64 {
    let d = value - mean;
    -HALF_LN_2PI - 0.5 * log_var - 0.5 * d * d * (-log_var).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn constant_matches_definition() {
        assert!((HALF_LN_2PI - 0.5 * (2.0 * PI).ln()).abs() < 1e-15);
    }

    #[test]
    fn standard_normal_at_zero() {
        let p = GmmParams::new(vec![0.0], vec![0.0], vec![0.0]);
        assert!((p.log_density(0.0) + 0.918_938_533_204_672_8).abs() < 1e-14);
        assert!((p.log_density(0.0) - normal_log_density(0.0, 0.0, 0.0)).abs() < 1e-15);
    }

    #[test]
    fn duplicated_components_collapse() {
        let one = GmmParams::new(vec![0.3], vec![1.5], vec![-0.4]);
        let two = GmmParams::new(vec![2.0, 2.0], vec![1.5, 1.5], vec![-0.4, -0.4]);
        for v in [-3.0, 0.0, 1.5, 7.0] {
            assert!((one.log_density(v) - two.log_density(v)).abs() < 1e-12);
        }
    }

    #[test]
    fn conditional_means() {
        let p = GmmParams::new(vec![0.1; 3], vec![2.5; 3], vec![0.0; 3]);
        assert!((p.conditional_mean() - 2.5).abs() < 1e-12);
        let p = GmmParams::new(vec![0.25f64.ln(), 0.75f64.ln()], vec![0.0, 4.0], vec![0.0, 0.0]);
        assert!((p.conditional_mean() - 3.0).abs() < 1e-12);
        assert!((mixture_mean(&[1.0, 3.0], &[0.0, 4.0]) - 3.0).abs() < 1e-15);
    }

    #[test]
    fn far_tail_stays_finite() {
        let p = GmmParams::new(vec![0.0, 1.0], vec![0.0, 1.0], vec![-7.0, -7.0]);
        let v = p.log_density(1e4);
        assert!(v.is_finite() && v < -1e10);
    }

    #[test]
    fn log_std_is_clamped() {
        let p = GmmParams::new(vec![0.0], vec![0.0], vec![-20.0]);
        assert_eq!(p.log_stds(), &[LOG_STD_MIN]);
        assert_eq!(clamp_log_std(5.0), (LOG_STD_MAX, false));
        assert_eq!(clamp_log_std(0.5), (0.5, true));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let logits = [0.2, -1.0, 0.7];
        let means = [-1.0, 0.5, 2.0];
        let log_stds = [0.1, -0.5, 0.3];
        let value = 0.8;
        let (mut gl, mut gm, mut gs) = ([0.0; 3], [0.0; 3], [0.0; 3]);
        log_density_grad(&logits, &means, &log_stds, value, &mut gl, &mut gm, &mut gs);
        let f = |l: &[f64], m: &[f64], s: &[f64]| GmmParams::new(l.to_vec(), m.to_vec(), s.to_vec()).log_density(value);
        let h = 1e-6;
        for j in 0..3 {
            let mut lp = logits;
            let mut lm = logits;
            lp[j] += h;
            lm[j] -= h;
            assert!(((f(&lp, &means, &log_stds) - f(&lm, &means, &log_stds)) / (2.0 * h) - gl[j]).abs() < 1e-7);
            let mut mp = means;
            let mut mm = means;
            mp[j] += h;
            mm[j] -= h;
            assert!(((f(&logits, &mp, &log_stds) - f(&logits, &mm, &log_stds)) / (2.0 * h) - gm[j]).abs() < 1e-7);
            let mut sp = log_stds;
            let mut sm = log_stds;
            sp[j] += h;
            sm[j] -= h;
            assert!(((f(&logits, &means, &sp) - f(&logits, &means, &sm)) / (2.0 * h) - gs[j]).abs() < 1e-7);
        }
    }
}
