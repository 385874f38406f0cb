use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Distribution of the latent confounder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Latent {
    /// Standard normal.
    Normal,
    /// `Beta(a, b)` shifted by `-a / (a + b)` so its mean is zero.
    Beta { a: f64, b: f64 },
}

impl Latent {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Latent::Normal => Ok(()),
            Latent::Beta { a, b } if a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite() => Ok(()),
            Latent::Beta { a, b } => Err(Error::config(format!(
                "latent: beta parameters must be positive, got ({a}, {b})"
            ))),
        }
    }
}

impl fmt::Display for Latent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Latent::Normal => f.write_str("normal"),
            Latent::Beta { a, b } => write!(f, "beta:{a},{b}"),
        }
    }
}

impl FromStr for Latent {
    type Err = Error;

    /// Accepts `normal` or `beta:A,B`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("normal") {
            return Ok(Latent::Normal);
        }
        let bad = || Error::config(format!("latent: expected 'normal' or 'beta:A,B', got '{s}'"));
        let params = s.strip_prefix("beta:").ok_or_else(bad)?;
        let (a, b) = params.split_once(',').ok_or_else(bad)?;
        let a: f64 = a.trim().parse().map_err(|_| bad())?;
        let b: f64 = b.trim().parse().map_err(|_| bad())?;
        let latent = Latent::Beta { a, b };
        latent.validate()?;
        Ok(latent)
    }
}

impl TryFrom<String> for Latent {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Latent> for String {
    fn from(l: Latent) -> String {
        l.to_string()
    }
}

/// Ground-truth causal structure of the generated data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    XCausesY,
    YCausesX,
    NoCausality,
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scenario::XCausesY => "x_causes_y",
            Scenario::YCausesX => "y_causes_x",
            Scenario::NoCausality => "no_causality",
        })
    }
}

impl FromStr for Scenario {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "x_causes_y" | "x->y" | "xy" => Ok(Scenario::XCausesY),
            "y_causes_x" | "y->x" | "yx" => Ok(Scenario::YCausesX),
            "no_causality" | "none" => Ok(Scenario::NoCausality),
            other => Err(Error::config(format!(
                "scenario: expected x_causes_y, y_causes_x or no_causality, got '{other}'"
            ))),
        }
    }
}

/// Knot scheme of the spline mechanism.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplineConfig {
    pub knots: usize,
    pub x_range: [f64; 2],
    pub y_range: [f64; 2],
    /// The mechanism is shared by all runs of an experiment; only data seeds vary.
    pub seed: u64,
}

impl Default for SplineConfig {
    fn default() -> Self {
        Self {
            knots: 8,
            x_range: [-8.0, 8.0],
            y_range: [-4.0, 4.0],
            seed: 0,
        }
    }
}

/// Data-generating process parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScmConfig {
    pub scenario: Scenario,
    pub latent: Latent,
    /// Variance (not standard deviation) of the cause's exogenous noise.
    pub x_noise_var: f64,
    pub transfer_range: [f64; 2],
    pub proxy_noise_std: f64,
    pub y_noise_std: f64,
}

impl Default for ScmConfig {
    fn default() -> Self {
        Self {
            scenario: Scenario::XCausesY,
            latent: Latent::Normal,
            x_noise_var: 2.0,
            transfer_range: [-4.0, 4.0],
            proxy_noise_std: 0.1,
            y_noise_std: 0.0,
        }
    }
}

impl ScmConfig {
    pub fn validate(&self) -> Result<()> {
        self.latent.validate()?;
        if !(self.x_noise_var > 0.0) {
            return Err(Error::config(format!("scm.x_noise_var must be > 0, got {}", self.x_noise_var)));
        }
        if !(self.proxy_noise_std >= 0.0) {
            return Err(Error::config(format!(
                "scm.proxy_noise_std must be >= 0, got {}",
                self.proxy_noise_std
            )));
        }
        if !(self.y_noise_std >= 0.0) {
            return Err(Error::config(format!("scm.y_noise_std must be >= 0, got {}", self.y_noise_std)));
        }
        let [lo, hi] = self.transfer_range;
        if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::config(format!("scm.transfer_range must satisfy lo <= hi, got [{lo}, {hi}]")));
        }
        Ok(())
    }
}

impl SplineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.knots < 4 {
            return Err(Error::config(format!("spline.knots must be >= 4, got {}", self.knots)));
        }
        if !(self.x_range[1] > self.x_range[0]) || !(self.y_range[1] >= self.y_range[0]) {
            return Err(Error::config("spline ranges must be increasing"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn latent_parsing() {
        assert_eq!("normal".parse::<Latent>().unwrap(), Latent::Normal);
        assert_eq!(
            "beta:0.5,0.5".parse::<Latent>().unwrap(),
            Latent::Beta { a: 0.5, b: 0.5 }
        );
        assert!("beta:-1,2".parse::<Latent>().is_err());
        assert!("beta:1".parse::<Latent>().is_err());
        assert!("gamma".parse::<Latent>().is_err());
        let l = Latent::Beta { a: 3.0, b: 3.0 };
        assert_eq!(l.to_string().parse::<Latent>().unwrap(), l);
    }

    #[test]
    fn scenario_parsing() {
        for s in [Scenario::XCausesY, Scenario::YCausesX, Scenario::NoCausality] {
            assert_eq!(s.to_string().parse::<Scenario>().unwrap(), s);
        }
        assert!("sideways".parse::<Scenario>().is_err());
    }
}
