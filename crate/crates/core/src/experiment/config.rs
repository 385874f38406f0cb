use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::error::{Error, Result};
use crate::meta::{Profile, RunConfig};
use crate::scm::{Latent, Scenario};
use crate::vote::VoteConfig;

/// Named experiment recipes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PresetName {
    Normality,
    Reverse,
    NoCausality,
    FcmMean,
    BetaRobustness,
    LimitedData,
    Superrun,
}

impl PresetName {
    pub const ALL: [PresetName; 7] = [
        PresetName::Normality,
        PresetName::Reverse,
        PresetName::NoCausality,
        PresetName::FcmMean,
        PresetName::BetaRobustness,
        PresetName::LimitedData,
        PresetName::Superrun,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            PresetName::Normality => "normality",
            PresetName::Reverse => "reverse",
            PresetName::NoCausality => "no-causality",
            PresetName::FcmMean => "fcm-mean",
            PresetName::BetaRobustness => "beta-robustness",
            PresetName::LimitedData => "limited-data",
            PresetName::Superrun => "superrun",
        }
    }
}

impl fmt::Display for PresetName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PresetName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        PresetName::ALL
            .into_iter()
            .find(|p| p.as_str() == s || p.as_str().replace('-', "_") == s)
            .ok_or_else(|| {
                let names: Vec<_> = PresetName::ALL.iter().map(|p| p.as_str()).collect();
                Error::config(format!("unknown preset `{s}`; expected one of {}", names.join(", ")))
            })
    }
}

/// Base-training iterations the `fcm-mean` preset uses at least, so the probe can be
/// judged well after its settling point.
pub const FCM_MIN_ITERS: usize = 300;

/// Finite-pool sizes: training observations, observations per transfer set,
/// observations per episode, number of transfer sets.
pub type PoolRow = [usize; 4];

/// Every knob of an experiment; the JSON summary echoes it in full.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub profile: Profile,
    /// Repetitions per variant (super-runs for the `superrun` preset).
    pub reps: usize,
    pub run: RunConfig,
    pub vote: VoteConfig,
    /// Pool sizes swept by `limited-data`.
    pub limited_rows: Vec<PoolRow>,
    /// Latent families swept by `beta-robustness`.
    pub beta_latents: Vec<Latent>,
    /// `fcm-mean` counts a run as converged when every probe from this iteration on
    /// lies within `fcm_band` of the mechanism value.
    pub fcm_settle_iter: usize,
    pub fcm_band: f64,
}

impl ExperimentConfig {
    pub fn profile(profile: Profile) -> Self {
        Self {
            profile,
            reps: 10,
            run: RunConfig::profile(profile),
            vote: VoteConfig::default(),
            limited_rows: vec![
                [1000, 500, 200, 10],
                [1000, 500, 200, 3],
                [1000, 500, 200, 1],
                [100, 50, 50, 10],
                [100, 50, 50, 3],
                [100, 50, 50, 1],
                [30, 13, 13, 10],
                [30, 15, 15, 3],
                [30, 15, 15, 1],
            ],
            beta_latents: vec![Latent::Beta { a: 3.0, b: 3.0 }, Latent::Beta { a: 0.5, b: 0.5 }],
            fcm_settle_iter: 200,
            fcm_band: 0.5,
        }
    }

    /// Profile defaults adjusted for a preset; the scenario and any iteration floor
    /// are set here so that files and flags can still override them.
    pub fn for_preset(profile: Profile, preset: Option<PresetName>) -> Self {
        let mut c = Self::profile(profile);
        let scm = &mut c.run.scm;
        match preset {
            Some(PresetName::Reverse) => scm.scenario = Scenario::YCausesX,
            Some(PresetName::NoCausality) => scm.scenario = Scenario::NoCausality,
            Some(PresetName::FcmMean) => {
                scm.scenario = Scenario::XCausesY;
                c.run.train_iters = c.run.train_iters.max(FCM_MIN_ITERS);
            }
            Some(_) => scm.scenario = Scenario::XCausesY,
            None => {}
        }
        c
    }

    pub fn validate(&self) -> Result<()> {
        self.run.validate()?;
        self.vote.validate()?;
        if !(self.fcm_band > 0.0) {
            return Err(Error::config(format!("fcm_band must be > 0, got {}", self.fcm_band)));
        }
        for l in &self.beta_latents {
            l.validate()?;
        }
        if self.limited_rows.iter().any(|r| r.iter().any(|&v| v == 0) || r[0] < 2 || r[1] < 2 || r[2] < 2) {
            return Err(Error::config(
                "limited_rows entries need >= 2 observations per pool and episode and >= 1 transfer set",
            ));
        }
        Ok(())
    }
}

fn to_table<T: Serialize>(value: &T) -> Result<Table> {
    match Value::try_from(value).map_err(|e| Error::config(e.to_string()))? {
        Value::Table(t) => Ok(t),
        _ => Err(Error::config("configuration must serialize to a table")),
    }
}

/// Recursively overlays `patch` onto `base`; keys absent from `base` are rejected.
/// Tables carrying a `kind` tag are replaced wholesale since their fields depend on it.
fn merge(base: &mut Table, patch: Table, prefix: &str) -> Result<()> {
    for (key, value) in patch {
        let path = if prefix.is_empty() {
            key.clone()
        } else {
            format!("{prefix}.{key}")
        };
        match (base.get_mut(&key), value) {
            (None, _) => return Err(Error::config(format!("unknown key `{path}`"))),
            (Some(Value::Table(b)), Value::Table(p)) if !p.contains_key("kind") => merge(b, p, &path)?,
            (Some(slot), v) => *slot = v,
        }
    }
    Ok(())
}

/// Parses a `key=value` assignment; the value is read as a TOML literal, falling back to a string.
fn parse_assignment(assignment: &str) -> Result<(String, Value)> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::config(format!("expected key=value, got `{assignment}`")))?;
    let key = key.trim().to_string();
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()));
    Ok((key, value))
}

fn set_path(table: &mut Table, key: &str, value: Value) -> Result<()> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|s| !s.is_empty()).ok_or_else(|| Error::config("empty key"))?;
    let mut cur = table;
    for p in parts {
        cur = match cur.get_mut(p) {
            Some(Value::Table(t)) => t,
            _ => return Err(Error::config(format!("unknown key `{key}`"))),
        };
    }
    match cur.get_mut(last) {
        Some(slot) => {
            *slot = value;
            Ok(())
        }
        None => Err(Error::config(format!("unknown key `{key}`"))),
    }
}

fn decode(table: Table, key: Option<&str>) -> Result<ExperimentConfig> {
    Value::Table(table).try_into().map_err(|e: toml::de::Error| {
        let msg = e.message().trim().to_string();
        match key {
            Some(k) => Error::config(format!("key `{k}`: {msg}")),
            None => Error::config(msg),
        }
    })
}

/// Builds the full configuration: profile defaults, then the optional TOML file,
/// then `key=value` overrides in order. Unknown keys and invalid values are
/// configuration errors naming the key.
pub fn parse_config(
    profile: Option<Profile>,
    preset: Option<PresetName>,
    file: Option<&Path>,
    overrides: &[String],
) -> Result<ExperimentConfig> {
    let file_table = match file {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let t: Table = text
                .parse()
                .map_err(|e: toml::de::Error| Error::config(format!("{}: {}", path.display(), e.message())))?;
            Some(t)
        }
        None => None,
    };
    let file_profile = match file_table.as_ref().and_then(|t| t.get("profile")) {
        Some(Value::String(s)) => Some(s.parse::<Profile>()?),
        Some(_) => return Err(Error::config("key `profile`: expected a string")),
        None => None,
    };
    let profile = profile.or(file_profile).unwrap_or(Profile::Paper);

    let mut table = to_table(&ExperimentConfig::for_preset(profile, preset))?;
    if let Some(mut t) = file_table {
        t.remove("profile");
        merge(&mut table, t, "")?;
        decode(table.clone(), None)?;
    }
    for assignment in overrides {
        let (key, value) = parse_assignment(assignment)?;
        if key == "profile" {
            return Err(Error::config("key `profile`: select the profile with --profile"));
        }
        set_path(&mut table, &key, value)?;
        decode(table.clone(), Some(&key))?;
    }
    let config = decode(table, None)?;
    config.validate()?;
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn empty_config_gives_default_profile() {
        let c = parse_config(None, None, None, &[]).unwrap();
        assert_eq!(c, ExperimentConfig::profile(Profile::Paper));
        assert_eq!(c.run.samples, 1000);
        assert_eq!(c.run.mc_samples, 300);
        assert_eq!(c.run.adapt_steps, 5);
        assert_eq!(c.run.model.components, 5);
        assert_eq!((c.run.train_iters, c.run.alpha_iters), (500, 400));
    }

    #[test]
    fn overrides_apply_in_order() {
        let c = parse_config(
            Some(Profile::Fast),
            None,
            None,
            &["run.scm.latent=beta:0.5,0.5".into(), "reps=3".into(), "reps=4".into()],
        )
        .unwrap();
        assert_eq!(c.run.scm.latent, Latent::Beta { a: 0.5, b: 0.5 });
        assert_eq!(c.reps, 4);
        assert_eq!(c.run.samples, 200);
    }

    #[test]
    fn bad_values_name_the_key() {
        let err = parse_config(None, None, None, &["run.alpha_iters=-1".into()]).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(err.to_string().contains("run.alpha_iters"), "{err}");
        let err = parse_config(None, None, None, &["run.bogus=1".into()]).unwrap_err();
        assert!(err.to_string().contains("run.bogus"), "{err}");
        let err = parse_config(None, None, None, &["run.alpha_iters=0".into()]).unwrap_err();
        assert!(err.to_string().contains("alpha_iters"), "{err}");
    }

    #[test]
    fn file_layer_and_unknown_keys() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(
            f,
            "profile = \"fast\"\nreps = 2\n[run]\nmc_samples = 7\n[run.data]\nkind = \"finite\"\ntrain_size = 30\ntransfer_size = 13\nepisode_size = 13\nn_transfers = 10"
        )
        .unwrap();
        let c = parse_config(None, None, Some(f.path()), &[]).unwrap();
        assert_eq!(c.profile, Profile::Fast);
        assert_eq!((c.reps, c.run.mc_samples, c.run.samples), (2, 7, 200));
        assert!(matches!(c.run.data, crate::meta::DataSource::Finite { episode_size: 13, .. }));

        let mut g = tempfile::NamedTempFile::new().unwrap();
        writeln!(g, "[vote]\nquorum = 3").unwrap();
        let err = parse_config(None, None, Some(g.path()), &[]).unwrap_err();
        assert!(err.to_string().contains("vote.quorum"), "{err}");

        let err = parse_config(None, None, Some(Path::new("/nonexistent/cfg.toml")), &[]).unwrap_err();
        assert_eq!(err.exit_code(), 4);
    }

    #[test]
    fn preset_defaults_then_flags() {
        let c = parse_config(Some(Profile::Fast), Some(PresetName::Reverse), None, &[]).unwrap();
        assert_eq!(c.run.scm.scenario, Scenario::YCausesX);
        let c = parse_config(
            Some(Profile::Fast),
            Some(PresetName::Reverse),
            None,
            &["run.scm.scenario=no_causality".into()],
        )
        .unwrap();
        assert_eq!(c.run.scm.scenario, Scenario::NoCausality);
        let c = parse_config(Some(Profile::Fast), Some(PresetName::FcmMean), None, &[]).unwrap();
        assert_eq!(c.run.train_iters, FCM_MIN_ITERS);
    }

    #[test]
    fn preset_names_round_trip() {
        for p in PresetName::ALL {
            assert_eq!(p.as_str().parse::<PresetName>().unwrap(), p);
        }
        assert!("figure-9".parse::<PresetName>().is_err());
    }
}
