use crate::mdn::log_add_exp;

/// Logistic sigmoid in tanh form, so `sigmoid(a) - sigmoid(b)` can be formed symmetrically.
#[inline]
pub fn sigmoid(a: f64) -> f64 {
    0.5 + 0.5 * (0.5 * a).tanh()
}

/// `ln(1 + e^x)` without overflow.
#[inline]
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Meta-objective `-ln(sigma(alpha) e^lxy + (1 - sigma(alpha)) e^lyx)` for log-likelihoods
/// `lxy`, `lyx` of the two hypotheses.
pub fn r_loss(alpha: f64, lxy: f64, lyx: f64) -> f64 {
    let ln_s = -softplus(-alpha);
    let ln_1ms = -softplus(alpha);
    -log_add_exp(ln_s + lxy, ln_1ms + lyx)
}

/// `dR/d alpha = sigmoid(alpha) - sigmoid(alpha + lxy - lyx)`.
///
/// Written as a tanh difference and with the likelihood gap formed first, so that
/// `r_grad(-a, lyx, lxy) == -r_grad(a, lxy, lyx)` holds bit for bit.
pub fn r_grad(alpha: f64, lxy: f64, lyx: f64) -> f64 {
    let gap = lxy - lyx;
    0.5 * ((0.5 * alpha).tanh() - (0.5 * (alpha + gap)).tanh())
}

/// The structural parameter and its plain gradient-descent state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaState {
    pub alpha: f64,
    pub lr: f64,
    pub iteration: usize,
}

impl AlphaState {
    /// Starts at `alpha = 0`, i.e. no preference.
    pub fn new(lr: f64) -> Self {
        Self {
            alpha: 0.0,
            lr,
            iteration: 0,
        }
    }

    pub fn sigma(&self) -> f64 {
        sigmoid(self.alpha)
    }

    /// One descent step on `R` for an episode's log-likelihoods; returns the new `sigma(alpha)`.
    pub fn step(&mut self, lxy: f64, lyx: f64) -> f64 {
        self.alpha -= self.lr * r_grad(self.alpha, lxy, lyx);
        self.iteration += 1;
        self.sigma()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loss_examples() {
        assert!((r_loss(0.0, -3.2, -3.2) - 3.2).abs() < 1e-12);
        assert!((r_loss(60.0, -1.0, 5.0) - 1.0).abs() < 1e-12);
        assert!((r_loss(0.0, 2f64.ln(), 0.0) + 1.5f64.ln()).abs() < 1e-12);
        assert!((r_loss(0.0, 2f64.ln(), 0.0) + 0.405_465).abs() < 1e-6);
        assert!(r_loss(0.0, -5000.0, -4000.0).is_finite());
    }

    #[test]
    fn gradient_examples() {
        for a in [-3.0, 0.0, 0.4, 8.0] {
            assert_eq!(r_grad(a, -7.5, -7.5), 0.0);
        }
        assert!((r_grad(0.0, 3f64.ln(), 0.0) + 0.25).abs() < 1e-15);
        assert!(r_grad(0.3, -2.0, -1.0) > 0.0);
        assert!(r_grad(0.3, -1.0, -2.0) < 0.0);
    }

    #[test]
    fn gradient_is_antisymmetric_bitwise() {
        for (a, x, y) in [(0.7, -12.3, -11.9), (-2.1, 3.3, -0.4), (5.0, 1e3, 999.0)] {
            assert_eq!(r_grad(-a, y, x).to_bits(), (-r_grad(a, x, y)).to_bits());
        }
    }

    #[test]
    fn sigmoid_matches_logistic() {
        for a in [-30.0, -2.0, 0.0, 0.5, 9.0] {
            assert!((sigmoid(a) - 1.0 / (1.0 + (-a as f64).exp())).abs() < 1e-15);
        }
    }

    #[test]
    fn state_moves_toward_better_hypothesis() {
        let mut s = AlphaState::new(0.5);
        assert_eq!(s.sigma(), 0.5);
        let up = s.step(-1.0, -2.0);
        assert!(up > 0.5);
        assert_eq!(s.iteration, 1);
    }
}
