use std::fs;
use std::io::BufWriter;
use std::path::Path;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, PresetName};
use crate::error::{Error, Result};
use crate::meta::{mechanism, run_single, train_base_traced, AlphaTrace, BaseTrace, DataSource, DataStream, RunConfig};
use crate::seed;
use crate::vote::{cast_ballot, tally, voter_seed, VoteOutcome};

/// Mean, population standard deviation, and range of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub count: usize,
    pub mean: Option<f64>,
    pub sd: Option<f64>,
    pub min: Option<f64>,
    pub max: Option<f64>,
}

pub fn summarize(values: &[f64]) -> Stats {
    if values.is_empty() {
        return Stats {
            count: 0,
            mean: None,
            sd: None,
            min: None,
            max: None,
        };
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Stats {
        count: values.len(),
        mean: Some(mean),
        sd: Some(var.sqrt()),
        min: values.iter().copied().reduce(f64::min),
        max: values.iter().copied().reduce(f64::max),
    }
}

/// What the runs of a group produce.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupKind {
    /// Full meta-learning runs, one alpha trace each.
    Alpha,
    /// Full runs whose final values are tallied as one super-run.
    Vote,
    /// Base training only, recording the conditional-mean probe.
    Fcm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: usize,
    pub seed: u64,
    /// Final `sigma(alpha)`, or the final X->Y probe for `fcm` groups.
    pub final_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FcmStats {
    /// Mechanism value at 0, the target of the X->Y probe.
    pub target: f64,
    /// Runs whose X->Y probe stays within the band from the settling iteration on.
    pub settled: usize,
    /// Mean over the last 100 iterations of the across-run sd of each model's probe.
    pub late_spread_xy: Option<f64>,
    pub late_spread_yx: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub label: String,
    pub kind: GroupKind,
    pub seed: u64,
    pub run: RunConfig,
    pub runs: Vec<RunRecord>,
    pub stats: Stats,
    pub vote: Option<VoteOutcome>,
    pub fcm: Option<FcmStats>,
}

/// Contents of `summary.json`: every value is recomputable from the CSV traces and the config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    /// `None` for a plain run of the configured scenario.
    pub preset: Option<PresetName>,
    pub master_seed: u64,
    pub config: ExperimentConfig,
    pub groups: Vec<GroupSummary>,
}

/// Raw output of one run.
#[derive(Debug, Clone, PartialEq)]
pub enum RunOutput {
    Alpha(AlphaTrace),
    Fcm(BaseTrace),
}

/// Everything a preset produced; the wall-clock time is kept out of the files so
/// that reruns are byte-identical.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultBundle {
    pub summary: Summary,
    pub outputs: Vec<RunOutput>,
    pub wall_clock: Duration,
}

struct GroupPlan {
    label: String,
    kind: GroupKind,
    run: RunConfig,
    reps: usize,
}

fn plan(preset: Option<PresetName>, config: &ExperimentConfig) -> Vec<GroupPlan> {
    let base = &config.run;
    let single = |kind| {
        vec![GroupPlan {
            label: base.scm.scenario.to_string(),
            kind,
            run: base.clone(),
            reps: config.reps,
        }]
    };
    match preset {
        None | Some(PresetName::Normality | PresetName::Reverse | PresetName::NoCausality) => {
            single(GroupKind::Alpha)
        }
        Some(PresetName::FcmMean) => single(GroupKind::Fcm),
        Some(PresetName::BetaRobustness) => config
            .beta_latents
            .iter()
            .map(|latent| {
                let mut run = base.clone();
                run.scm.latent = *latent;
                GroupPlan {
                    label: latent.to_string(),
                    kind: GroupKind::Alpha,
                    run,
                    reps: config.reps,
                }
            })
            .collect(),
        Some(PresetName::LimitedData) => config
            .limited_rows
            .iter()
            .map(|r| {
                let mut run = base.clone();
                run.data = DataSource::Finite {
                    train_size: r[0],
                    transfer_size: r[1],
                    episode_size: r[2],
                    n_transfers: r[3],
                };
                GroupPlan {
                    label: format!("{}-{}-{}-{}", r[0], r[1], r[2], r[3]),
                    kind: GroupKind::Alpha,
                    run,
                    reps: config.reps,
                }
            })
            .collect(),
        Some(PresetName::Superrun) => (0..config.reps)
            .map(|k| GroupPlan {
                label: format!("superrun-{k}"),
                kind: GroupKind::Vote,
                run: base.clone(),
                reps: config.vote.voters,
            })
            .collect(),
    }
}

/// Seed of group `g` under `master`; run `r` of the group uses `voter_seed(group_seed, r)`,
/// so a `Vote` group reproduces `super_run(run, vote, group_seed)`.
pub fn group_seed(master: u64, g: usize) -> u64 {
    seed::derive_labeled(master, "group", g as u64)
}

fn execute(kind: GroupKind, run: &RunConfig, seed: u64) -> Result<RunOutput> {
    match kind {
        GroupKind::Alpha | GroupKind::Vote => run_single(run, seed).map(RunOutput::Alpha),
        GroupKind::Fcm => {
            let stream = DataStream::new(run, seed)?;
            train_base_traced(run, &stream, seed).map(|(_, t)| RunOutput::Fcm(t))
        }
    }
}

fn final_value(out: &RunOutput) -> Option<f64> {
    match out {
        RunOutput::Alpha(t) => t.final_sigma(),
        RunOutput::Fcm(t) => t.yhat_xy.last().copied(),
    }
}

fn fcm_stats(config: &ExperimentConfig, run: &RunConfig, traces: &[&BaseTrace]) -> Result<FcmStats> {
    let target = mechanism(run)?.eval(0.0);
    let settled = traces
        .iter()
        .filter(|t| {
            t.yhat_xy.len() > config.fcm_settle_iter
                && t.yhat_xy[config.fcm_settle_iter..]
                    .iter()
                    .all(|v| (v - target).abs() <= config.fcm_band)
        })
        .count();
    let spread = |pick: fn(&BaseTrace) -> &Vec<f64>| -> Option<f64> {
        let len = traces.iter().map(|t| pick(t).len()).min()?;
        if traces.len() < 2 || len == 0 {
            return None;
        }
        let from = len.saturating_sub(100);
        let sds: Vec<f64> = (from..len)
            .map(|i| {
                let col: Vec<f64> = traces.iter().map(|t| pick(t)[i]).collect();
                summarize(&col).sd.unwrap_or(0.0)
            })
            .collect();
        summarize(&sds).mean
    };
    Ok(FcmStats {
        target,
        settled,
        late_spread_xy: spread(|t| &t.yhat_xy),
        late_spread_yx: spread(|t| &t.yhat_yx),
    })
}

/// Assembles group summaries from run outputs laid out in run-id order.
fn assemble(
    config: &ExperimentConfig,
    plans: &[(GroupPlan, u64)],
    outputs: &[RunOutput],
) -> Result<Vec<GroupSummary>> {
    let mut groups = Vec::with_capacity(plans.len());
    let mut next_id = 0;
    for (plan, gseed) in plans {
        let ids = next_id..next_id + plan.reps;
        next_id += plan.reps;
        let outs = &outputs[ids.clone()];
        let runs: Vec<RunRecord> = ids
            .clone()
            .zip(outs)
            .enumerate()
            .map(|(r, (run_id, out))| RunRecord {
                run_id,
                seed: voter_seed(*gseed, r),
                final_value: final_value(out),
            })
            .collect();
        let finals: Vec<f64> = runs.iter().filter_map(|r| r.final_value).collect();
        let vote = match plan.kind {
            GroupKind::Vote => {
                let mut vote_cfg = config.vote;
                vote_cfg.voters = plan.reps;
                let ballots = outs
                    .iter()
                    .map(|o| match o {
                        RunOutput::Alpha(t) => cast_ballot(t, &vote_cfg),
                        RunOutput::Fcm(_) => Err(Error::Input("vote group holds a non-alpha run".into())),
                    })
                    .collect::<Result<Vec<_>>>()?;
                Some(tally(&ballots, &vote_cfg)?)
            }
            _ => None,
        };
        let fcm = match plan.kind {
            GroupKind::Fcm => {
                let traces: Vec<&BaseTrace> = outs
                    .iter()
                    .filter_map(|o| match o {
                        RunOutput::Fcm(t) => Some(t),
                        RunOutput::Alpha(_) => None,
                    })
                    .collect();
                Some(fcm_stats(config, &plan.run, &traces)?)
            }
            _ => None,
        };
        groups.push(GroupSummary {
            label: plan.label.clone(),
            kind: plan.kind,
            seed: *gseed,
            run: plan.run.clone(),
            runs,
            stats: summarize(&finals),
            vote,
            fcm,
        });
    }
    Ok(groups)
}

/// Runs every repetition of a preset (in parallel on the current rayon pool) without
/// touching the filesystem.
pub fn execute_preset(preset: Option<PresetName>, config: &ExperimentConfig, master_seed: u64) -> Result<ResultBundle> {
    config.validate()?;
    let start = Instant::now();
    let plans: Vec<(GroupPlan, u64)> = plan(preset, config)
        .into_iter()
        .enumerate()
        .map(|(g, p)| (p, group_seed(master_seed, g)))
        .collect();
    for (p, _) in &plans {
        p.run.validate()?;
    }
    let jobs: Vec<(GroupKind, &RunConfig, u64)> = plans
        .iter()
        .flat_map(|(p, gseed)| (0..p.reps).map(move |r| (p.kind, &p.run, voter_seed(*gseed, r))))
        .collect();
    let outputs = jobs
        .par_iter()
        .enumerate()
        .map(|(id, &(kind, run, s))| {
            execute(kind, run, s).map_err(|e| match e {
                Error::Run(msg) => Error::run(format!("run {id}: {msg}")),
                other => other,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let groups = assemble(config, &plans, &outputs)?;
    Ok(ResultBundle {
        summary: Summary {
            preset,
            master_seed,
            config: config.clone(),
            groups,
        },
        outputs,
        wall_clock: start.elapsed(),
    })
}

pub const SUMMARY_FILE: &str = "summary.json";

fn trace_file(dir: &Path, out: &RunOutput, id: usize) -> std::path::PathBuf {
    match out {
        RunOutput::Alpha(_) => dir.join(format!("trace_{id}.csv")),
        RunOutput::Fcm(_) => dir.join(format!("fcm_{id}.csv")),
    }
}

const FCM_HEADER: [&str; 4] = ["run_id", "iteration", "yhat_xy", "yhat_yx"];

fn write_fcm_csv(path: &Path, id: usize, t: &BaseTrace) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let io = |e: csv::Error| match e.into_kind() {
        csv::ErrorKind::Io(err) => Error::io(path, err),
        other => Error::run(format!("{}: {other:?}", path.display())),
    };
    w.write_record(FCM_HEADER).map_err(io)?;
    for (i, (a, b)) in t.yhat_xy.iter().zip(&t.yhat_yx).enumerate() {
        w.write_record([id.to_string(), (i + 1).to_string(), a.to_string(), b.to_string()])
            .map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_fcm_csv(path: &Path) -> Result<BaseTrace> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::Reader::from_reader(file);
    let bad = |msg: String| Error::Input(format!("{}: {msg}", path.display()));
    let header = r.headers().map_err(|e| bad(e.to_string()))?.clone();
    if header.iter().ne(FCM_HEADER) {
        return Err(bad("unexpected header".into()));
    }
    let mut t = BaseTrace::default();
    for rec in r.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let num = |i: usize| -> Result<f64> {
            rec.get(i)
                .ok_or_else(|| bad("short row".into()))?
                .parse()
                .map_err(|e| bad(format!("{e}")))
        };
        t.yhat_xy.push(num(2)?);
        t.yhat_yx.push(num(3)?);
    }
    Ok(t)
}

/// Writes one CSV per run and `summary.json` into `dir` (created if needed).
pub fn write_bundle(bundle: &ResultBundle, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (id, out) in bundle.outputs.iter().enumerate() {
        let path = trace_file(dir, out, id);
        match out {
            RunOutput::Alpha(t) => {
                let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
                t.write_csv(id, BufWriter::new(file)).map_err(|e| match e {
                    Error::Run(msg) => Error::io(&path, std::io::Error::other(msg)),
                    other => other,
                })?;
            }
            RunOutput::Fcm(t) => write_fcm_csv(&path, id, t)?,
        }
    }
    let path = dir.join(SUMMARY_FILE);
    let mut text = serde_json::to_string_pretty(&bundle.summary).map_err(|e| Error::run(e.to_string()))?;
    text.push('\n');
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

/// Executes a preset and writes its outputs.
pub fn run_preset(preset: Option<PresetName>, config: &ExperimentConfig, master_seed: u64, dir: &Path) -> Result<ResultBundle> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let bundle = execute_preset(preset, config, master_seed)?;
    write_bundle(&bundle, dir)?;
    Ok(bundle)
}

pub fn load_summary(dir: &Path) -> Result<Summary> {
    let path = dir.join(SUMMARY_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Input(format!("{}: {e}", path.display())))
}

/// Recomputes the summary of an output directory from its CSV traces; the group layout,
/// seeds and configuration come from the existing `summary.json`.
pub fn rebuild_summary(dir: &Path) -> Result<Summary> {
    let old = load_summary(dir)?;
    let mut outputs = Vec::new();
    let mut plans = Vec::new();
    for g in &old.groups {
        for r in &g.runs {
            let out = match g.kind {
                GroupKind::Fcm => RunOutput::Fcm(read_fcm_csv(&dir.join(format!("fcm_{}.csv", r.run_id)))?),
                _ => {
                    let path = dir.join(format!("trace_{}.csv", r.run_id));
                    let file = fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
                    let (id, mut t) = AlphaTrace::read_csv(file)?;
                    if id != r.run_id && !t.is_empty() {
                        return Err(Error::Input(format!("{}: run id {id} != {}", path.display(), r.run_id)));
                    }
                    t.seed = r.seed;
                    RunOutput::Alpha(t)
                }
            };
            outputs.push(out);
        }
        plans.push((
            GroupPlan {
                label: g.label.clone(),
                kind: g.kind,
                run: g.run.clone(),
                reps: g.runs.len(),
            },
            g.seed,
        ));
    }
    let groups = assemble(&old.config, &plans, &outputs)?;
    Ok(Summary { groups, ..old })
}
