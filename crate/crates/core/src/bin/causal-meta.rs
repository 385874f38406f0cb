use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use causal_meta::experiment::{parse_config, run_preset, ExperimentConfig, PresetName, ResultBundle};
use causal_meta::meta::{DataStream, Profile};
use causal_meta::scm::{Latent, Scenario};
use causal_meta::vote::{simulate_verdicts, verdict_probabilities, VoteConfig};
use causal_meta::{Error, Result};

/// Meta-learned causal direction discovery between two variables sharing a latent confounder.
#[derive(Parser)]
#[command(name = "causal-meta", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a dataset from the structural model and write it as CSV.
    Gen(GenArgs),
    /// Run the meta-learning loop for the configured scenario.
    Run(Common),
    /// Run a named experiment preset.
    Preset {
        /// One of: normality, reverse, no-causality, fcm-mean, beta-robustness, limited-data, superrun.
        name: String,
        #[command(flatten)]
        common: Common,
    },
    /// Run super-runs (independent voters plus a plurality vote).
    Superrun(Common),
    /// Closed-form verdict probabilities of a super-run.
    Analytics(AnalyticsArgs),
}

#[derive(Args)]
struct Common {
    /// Master seed; every run seed is derived from it.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// x_causes_y, y_causes_x or no_causality.
    #[arg(long)]
    scenario: Option<Scenario>,
    /// `normal` or `beta:A,B`.
    #[arg(long)]
    latent: Option<Latent>,
    /// `paper` (default) or `fast`.
    #[arg(long)]
    profile: Option<Profile>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Repetitions per variant.
    #[arg(long)]
    reps: Option<usize>,
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set run.mc_samples=50`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Number of meta-learning iterations.
    #[arg(long, allow_hyphen_values = true)]
    alpha_iters: Option<String>,
}

impl Common {
    /// Flags become overrides applied before the explicit `--set` ones.
    fn overrides(&self) -> Vec<String> {
        let mut v = Vec::new();
        if let Some(s) = self.scenario {
            v.push(format!("run.scm.scenario=\"{s}\""));
        }
        if let Some(l) = self.latent {
            v.push(format!("run.scm.latent=\"{l}\""));
        }
        if let Some(r) = self.reps {
            v.push(format!("reps={r}"));
        }
        if let Some(a) = &self.alpha_iters {
            v.push(format!("run.alpha_iters={a}"));
        }
        v.extend(self.set.iter().cloned());
        v
    }

    fn config(&self, preset: Option<PresetName>) -> Result<ExperimentConfig> {
        parse_config(self.profile, preset, self.config.as_deref(), &self.overrides())
    }
}

#[derive(Args)]
struct GenArgs {
    #[command(flatten)]
    common: Common,
    /// Number of samples (defaults to the profile's sample size).
    #[arg(long)]
    n: Option<usize>,
    /// Draw from the transfer distribution with this cause mean instead of the training one.
    #[arg(long, allow_hyphen_values = true)]
    mu: Option<f64>,
}

#[derive(Args)]
struct AnalyticsArgs {
    /// Probability that a single run ends above the positive cutoff.
    #[arg(long, allow_hyphen_values = true)]
    p: f64,
    /// Probability that a single run ends below the negative cutoff.
    #[arg(long, allow_hyphen_values = true)]
    q: f64,
    /// Voters per super-run.
    #[arg(long, default_value_t = 10)]
    n: usize,
    /// Required majority fraction.
    #[arg(long, default_value_t = 2.0 / 3.0, allow_hyphen_values = true)]
    r: f64,
    /// Also estimate the probabilities by simulating this many super-runs.
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn write_stdout(text: &str) -> Result<()> {
    let mut out = std::io::stdout().lock();
    writeln!(out, "{text}").map_err(|e| Error::io("<stdout>", e))
}

fn report(bundle: &ResultBundle, dir: &Path) -> Result<()> {
    for g in &bundle.summary.groups {
        let mut line = format!("{}: {} runs", g.label, g.runs.len());
        if let Some(m) = g.stats.mean {
            line += &format!(", final mean {m:.4}");
        }
        if let Some(v) = &g.vote {
            line += &format!(", verdict {}", serde_json::to_string(&v.verdict).unwrap_or_default());
        }
        if let Some(f) = &g.fcm {
            line += &format!(", settled {}/{} (target {:.4})", f.settled, g.runs.len(), f.target);
        }
        write_stdout(&line)?;
    }
    write_stdout(&format!("results in {}", dir.display()))?;
    eprintln!("wall clock: {:.1}s", bundle.wall_clock.as_secs_f64());
    Ok(())
}

fn gen(args: &GenArgs) -> Result<()> {
    let mut config = args.common.config(None)?;
    if let Some(n) = args.n {
        config.run.samples = n;
    }
    let stream = DataStream::new(&config.run, args.common.seed)?;
    let data = match args.mu {
        Some(mu) => stream.transfer_batch_at(mu, args.common.seed)?.1,
        None => stream.training_batch(args.common.seed)?,
    };
    let dir = &args.common.out;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join("data.csv");
    data.save_csv(&path)?;
    write_stdout(&format!("{} rows written to {}", data.len(), path.display()))
}

fn analytics(args: &AnalyticsArgs) -> Result<()> {
    let vote = VoteConfig {
        voters: args.n,
        majority: args.r,
        ..VoteConfig::default()
    };
    let a = verdict_probabilities(args.p, args.q, &vote)?;
    let mut value = serde_json::to_value(a).map_err(|e| Error::run(e.to_string()))?;
    if let Some(trials) = args.trials {
        let f = simulate_verdicts(args.p, args.q, &vote, trials, args.seed)?;
        value["simulated"] = serde_json::to_value(f).map_err(|e| Error::run(e.to_string()))?;
    }
    write_stdout(&serde_json::to_string_pretty(&value).map_err(|e| Error::run(e.to_string()))?)
}

fn run_experiment(common: &Common, preset: Option<PresetName>) -> Result<()> {
    let config = common.config(preset)?;
    let bundle = run_preset(preset, &config, common.seed, &common.out)?;
    report(&bundle, &common.out)
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen(args) => gen(&args),
        Command::Run(common) => run_experiment(&common, None),
        Command::Preset { name, common } => run_experiment(&common, Some(name.parse()?)),
        Command::Superrun(common) => {
            let reps = common.reps.or(Some(1));
            run_experiment(&Common { reps, ..common }, Some(PresetName::Superrun))
        }
        Command::Analytics(args) => analytics(&args),
    }
}

fn init_threads() -> Result<()> {
    let Ok(raw) = std::env::var("CAUSAL_META_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| Error::config(format!("CAUSAL_META_THREADS: expected a thread count, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::config(format!("CAUSAL_META_THREADS: {e}")))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match init_threads().and_then(|()| dispatch(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
