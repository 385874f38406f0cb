//! Super-runs: independent meta-learning runs combined by cutoff-based plurality voting,
//! plus closed-form verdict probabilities.

use std::fmt;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::meta::{run_single, AlphaTrace, RunConfig};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VoteConfig {
    /// Number of voters.
    pub voters: usize,
    /// Required majority fraction, in (0.5, 1].
    pub majority: f64,
    /// Final `sigma(alpha)` at or above this votes X->Y.
    pub pos_cutoff: f64,
    /// Final `sigma(alpha)` at or below this votes Y->X.
    pub neg_cutoff: f64,
}

impl Default for VoteConfig {
    fn default() -> Self {
        Self {
            voters: 10,
            majority: 2.0 / 3.0,
            pos_cutoff: 0.7,
            neg_cutoff: 0.3,
        }
    }
}

impl VoteConfig {
    pub fn validate(&self) -> Result<()> {
        if self.voters == 0 {
            return Err(Error::config("vote.voters must be >= 1"));
        }
        if !(self.majority > 0.5 && self.majority <= 1.0) {
            return Err(Error::config(format!(
                "vote.majority must be in (0.5, 1], got {}",
                self.majority
            )));
        }
        for (key, c) in [("vote.pos_cutoff", self.pos_cutoff), ("vote.neg_cutoff", self.neg_cutoff)] {
            if !(c > 0.0 && c < 1.0) {
                return Err(Error::config(format!("{key} must be in (0, 1), got {c}")));
            }
        }
        if self.neg_cutoff > self.pos_cutoff {
            return Err(Error::config(format!(
                "vote.neg_cutoff ({}) must not exceed vote.pos_cutoff ({})",
                self.neg_cutoff, self.pos_cutoff
            )));
        }
        Ok(())
    }

    /// Ballots one direction needs to win: `ceil(voters * majority)`.
    pub fn threshold(&self) -> usize {
        // The small offset keeps e.g. 9 * (2/3) from rounding up past 6.
        (self.voters as f64 * self.majority - 1e-9).ceil() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verdict {
    #[serde(rename = "X->Y")]
    XToY,
    #[serde(rename = "Y->X")]
    YToX,
    #[serde(rename = "no causality")]
    NoCausality,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::XToY => "X->Y",
            Verdict::YToX => "Y->X",
            Verdict::NoCausality => "no causality",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Choice {
    ForXToY,
    ForYToX,
    Abstain,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ballot {
    pub choice: Choice,
    pub sigma: f64,
}

/// Ballot for a final `sigma(alpha)`; both cutoffs are inclusive.
pub fn ballot_for(sigma: f64, config: &VoteConfig) -> Ballot {
    let choice = if sigma >= config.pos_cutoff {
        Choice::ForXToY
    } else if sigma <= config.neg_cutoff {
        Choice::ForYToX
    } else {
        Choice::Abstain
    };
    Ballot { choice, sigma }
}

pub fn cast_ballot(trace: &AlphaTrace, config: &VoteConfig) -> Result<Ballot> {
    let sigma = trace
        .final_sigma()
        .ok_or_else(|| Error::Input("cannot vote with an empty trace".into()))?;
    Ok(ballot_for(sigma, config))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tallies {
    pub pos: usize,
    pub neg: usize,
    pub abstain: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteOutcome {
    pub verdict: Verdict,
    pub tallies: Tallies,
    pub final_sigmas: Vec<f64>,
    pub ballots: Vec<Choice>,
    pub config: VoteConfig,
}

fn verdict_from(t: Tallies, config: &VoteConfig) -> Verdict {
    let need = config.threshold();
    if t.pos >= need {
        Verdict::XToY
    } else if t.neg >= need {
        Verdict::YToX
    } else {
        Verdict::NoCausality
    }
}

pub fn tally(ballots: &[Ballot], config: &VoteConfig) -> Result<VoteOutcome> {
    config.validate()?;
    if ballots.len() != config.voters {
        return Err(Error::config(format!(
            "expected {} ballots, got {}",
            config.voters,
            ballots.len()
        )));
    }
    let mut t = Tallies::default();
    for b in ballots {
        match b.choice {
            Choice::ForXToY => t.pos += 1,
            Choice::ForYToX => t.neg += 1,
            Choice::Abstain => t.abstain += 1,
        }
    }
    Ok(VoteOutcome {
        verdict: verdict_from(t, config),
        tallies: t,
        final_sigmas: ballots.iter().map(|b| b.sigma).collect(),
        ballots: ballots.iter().map(|b| b.choice).collect(),
        config: *config,
    })
}

/// Closed-form verdict probabilities for per-voter probabilities `p` (X->Y ballot) and
/// `q` (Y->X ballot).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoteAnalytics {
    pub p: f64,
    pub q: f64,
    pub x_to_y: f64,
    pub y_to_x: f64,
    pub no_causality: f64,
}

/// `x ln y` with `0 ln 0 = 0`.
fn xlny(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * y.ln()
    }
}

/// `P(Binomial(n, p) >= k)`, summed in log space.
fn binomial_upper_tail(n: usize, p: f64, k: usize) -> f64 {
    // The integer recurrence is exact until it overflows; past that the log form takes over.
    let mut c = 1.0f64;
    let mut ln_c_acc = 0.0;
    let mut total = 0.0;
    for i in 0..=n {
        if i > 0 {
            c = c * (n - i + 1) as f64 / i as f64;
            ln_c_acc += ((n - i + 1) as f64).ln() - (i as f64).ln();
        }
        if i >= k {
            let ln_c = if c.is_finite() { c.ln() } else { ln_c_acc };
            let ln_term = ln_c + xlny(i as f64, p) + xlny((n - i) as f64, 1.0 - p);
            total += ln_term.exp();
        }
    }
    total.min(1.0)
}

pub fn verdict_probabilities(p: f64, q: f64, config: &VoteConfig) -> Result<VoteAnalytics> {
    config.validate()?;
    for (name, v) in [("p", p), ("q", q)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::Input(format!("{name} must be in [0, 1], got {v}")));
        }
    }
    if p + q > 1.0 + 1e-12 {
        return Err(Error::Input(format!("p + q must be <= 1, got {}", p + q)));
    }
    let n = config.voters;
    let k = config.threshold();
    // Reaching the threshold in both directions is impossible for a strict majority,
    // so the two marginal tails are disjoint events.
    let x_to_y = binomial_upper_tail(n, p, k);
    let y_to_x = binomial_upper_tail(n, q, k);
    Ok(VoteAnalytics {
        p,
        q,
        x_to_y,
        y_to_x,
        no_causality: (1.0 - x_to_y - y_to_x).max(0.0),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerdictFrequencies {
    pub trials: usize,
    pub x_to_y: f64,
    pub y_to_x: f64,
    pub no_causality: f64,
}

/// Monte-Carlo verdict frequencies from trinomial ballots.
pub fn simulate_verdicts(p: f64, q: f64, config: &VoteConfig, trials: usize, seed: u64) -> Result<VerdictFrequencies> {
    verdict_probabilities(p, q, config)?;
    if trials == 0 {
        return Err(Error::config("trials must be >= 1"));
    }
    let mut rng = seed::rng(seed);
    let mut counts = [0usize; 3];
    for _ in 0..trials {
        let mut t = Tallies::default();
        for _ in 0..config.voters {
            let u: f64 = rng.gen();
            if u < p {
                t.pos += 1;
            } else if u < p + q {
                t.neg += 1;
            } else {
                t.abstain += 1;
            }
        }
        counts[match verdict_from(t, config) {
            Verdict::XToY => 0,
            Verdict::YToX => 1,
            Verdict::NoCausality => 2,
        }] += 1;
    }
    let f = |c: usize| c as f64 / trials as f64;
    Ok(VerdictFrequencies {
        trials,
        x_to_y: f(counts[0]),
        y_to_x: f(counts[1]),
        no_causality: f(counts[2]),
    })
}

/// Seed of voter `index` within a super-run.
pub fn voter_seed(master: u64, index: usize) -> u64 {
    seed::derive_labeled(master, "voter", index as u64)
}

/// Runs the voters (in parallel on the current rayon pool) and tallies their final values.
pub fn super_run(run: &RunConfig, vote: &VoteConfig, master_seed: u64) -> Result<(VoteOutcome, Vec<AlphaTrace>)> {
    vote.validate()?;
    run.validate()?;
    let traces = (0..vote.voters)
        .into_par_iter()
        .map(|i| {
            run_single(run, voter_seed(master_seed, i)).map_err(|e| match e {
                Error::Run(msg) => Error::run(format!("voter {i}: {msg}")),
                other => other,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let ballots = traces.iter().map(|t| cast_ballot(t, vote)).collect::<Result<Vec<_>>>()?;
    Ok((tally(&ballots, vote)?, traces))
}
