use rand::Rng;
use rand_distr::Uniform;

use crate::error::{Error, Result};
use crate::seed;

/// Natural cubic spline through a set of knots, extended linearly outside them.
#[derive(Debug, Clone, PartialEq)]
pub struct SplineMechanism {
    xs: Vec<f64>,
    ys: Vec<f64>,
    /// Second derivative at every knot; zero at both ends.
    m: Vec<f64>,
}

impl SplineMechanism {
    /// Equally spaced knots over `x_range` with i.i.d. uniform values over `y_range`.
    pub fn build(seed: u64, n_knots: usize, x_range: [f64; 2], y_range: [f64; 2]) -> Result<Self> {
        if n_knots < 4 {
            return Err(Error::config(format!("spline needs at least 4 knots, got {n_knots}")));
        }
        if !(x_range[1] > x_range[0]) || !(y_range[1] >= y_range[0]) {
            return Err(Error::config(format!(
                "degenerate spline ranges x {x_range:?} y {y_range:?}"
            )));
        }
        let step = (x_range[1] - x_range[0]) / (n_knots - 1) as f64;
        let xs: Vec<f64> = (0..n_knots).map(|i| x_range[0] + step * i as f64).collect();
        let mut rng = seed::rng(seed);
        let ys: Vec<f64> = if y_range[0] == y_range[1] {
            vec![y_range[0]; n_knots]
        } else {
            let dist = Uniform::new(y_range[0], y_range[1]);
            (0..n_knots).map(|_| rng.sample(dist)).collect()
        };
        Self::from_knots(xs, ys)
    }

    pub fn from_knots(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if xs.len() < 4 || xs.len() != ys.len() {
            return Err(Error::config(format!(
                "spline needs >= 4 knots with matching values ({} x, {} y)",
                xs.len(),
                ys.len()
            )));
        }
        if xs.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::config("spline knot positions must be strictly increasing"));
        }
        let m = natural_second_derivatives(&xs, &ys);
        Ok(Self { xs, ys, m })
    }

    pub fn knots(&self) -> (&[f64], &[f64]) {
        (&self.xs, &self.ys)
    }

    pub fn second_derivatives(&self) -> &[f64] {
        &self.m
    }

    fn segment(&self, x: f64) -> usize {
        let n = self.xs.len();
        match self.xs.partition_point(|&k| k <= x) {
            0 => 0,
            i if i >= n => n - 2,
            i => i - 1,
        }
    }

    fn end_slopes(&self) -> (f64, f64) {
        let n = self.xs.len();
        let h0 = self.xs[1] - self.xs[0];
        let left = (self.ys[1] - self.ys[0]) / h0 - h0 * (2.0 * self.m[0] + self.m[1]) / 6.0;
        let hn = self.xs[n - 1] - self.xs[n - 2];
        let right = (self.ys[n - 1] - self.ys[n - 2]) / hn + hn * (self.m[n - 2] + 2.0 * self.m[n - 1]) / 6.0;
        (left, right)
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x < self.xs[0] {
            let (slope, _) = self.end_slopes();
            return self.ys[0] + slope * (x - self.xs[0]);
        }
        if x > self.xs[n - 1] {
            let (_, slope) = self.end_slopes();
            return self.ys[n - 1] + slope * (x - self.xs[n - 1]);
        }
        let i = self.segment(x);
        let h = self.xs[i + 1] - self.xs[i];
        let a = (self.xs[i + 1] - x) / h;
        let b = (x - self.xs[i]) / h;
        a * self.ys[i]
            + b * self.ys[i + 1]
            + ((a * a * a - a) * self.m[i] + (b * b * b - b) * self.m[i + 1]) * h * h / 6.0
    }

    /// First derivative; constant outside the knot range.
    pub fn derivative(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x < self.xs[0] {
            return self.end_slopes().0;
        }
        if x > self.xs[n - 1] {
            return self.end_slopes().1;
        }
        let i = self.segment(x);
        let h = self.xs[i + 1] - self.xs[i];
        let a = (self.xs[i + 1] - x) / h;
        let b = (x - self.xs[i]) / h;
        (self.ys[i + 1] - self.ys[i]) / h - (3.0 * a * a - 1.0) * h * self.m[i] / 6.0
            + (3.0 * b * b - 1.0) * h * self.m[i + 1] / 6.0
    }

    /// Second derivative evaluated on segment `seg` at `x` (a one-sided value at knots).
    pub fn second_derivative_on(&self, seg: usize, x: f64) -> f64 {
        let h = self.xs[seg + 1] - self.xs[seg];
        let a = (self.xs[seg + 1] - x) / h;
        let b = (x - self.xs[seg]) / h;
        a * self.m[seg] + b * self.m[seg + 1]
    }
}

/// Thomas-algorithm solve of the natural-spline system for the knot second derivatives.
fn natural_second_derivatives(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let h: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
    let inner = n - 2;
    let mut diag = vec![0.0; inner];
    let mut upper = vec![0.0; inner];
    let mut rhs = vec![0.0; inner];
    for k in 0..inner {
        let i = k + 1;
        diag[k] = 2.0 * (h[i - 1] + h[i]);
        upper[k] = h[i];
        rhs[k] = 6.0 * ((ys[i + 1] - ys[i]) / h[i] - (ys[i] - ys[i - 1]) / h[i - 1]);
    }
    // forward sweep; sub-diagonal entry of row k is h[k]
    for k in 1..inner {
        let factor = h[k] / diag[k - 1];
        diag[k] -= factor * upper[k - 1];
        rhs[k] -= factor * rhs[k - 1];
    }
    let mut m = vec![0.0; n];
    for k in (0..inner).rev() {
        let next = if k + 1 < inner { m[k + 2] } else { 0.0 };
        m[k + 1] = (rhs[k] - upper[k] * next) / diag[k];
    }
    m
}
