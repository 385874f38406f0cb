//! C interface. Every fallible function returns a `CmStatus`; on failure the
//! message is available from `cm_last_error` on the same thread. Objects are
//! opaque handles released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use causal_meta::experiment::{parse_config, ExperimentConfig};
use causal_meta::meta::{r_grad, r_loss, run_single, AlphaTrace, Profile};
use causal_meta::vote::{ballot_for, tally, verdict_probabilities, Verdict, VoteConfig};
use causal_meta::Error;

/// Result codes; the nonzero values match the CLI exit codes where they overlap.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmStatus {
    CmOk = 0,
    /// Invalid configuration or arguments.
    CmErrConfig = 2,
    /// Numerical failure while running.
    CmErrRun = 3,
    CmErrIo = 4,
    /// A required pointer argument was NULL.
    CmErrNullPointer = 5,
    /// Internal panic caught at the boundary.
    CmErrPanic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmVerdict {
    CmVerdictYToX = -1,
    CmVerdictNone = 0,
    CmVerdictXToY = 1,
}

/// Experiment configuration: profile defaults plus `key=value` overrides.
pub struct CmConfig {
    profile: Profile,
    overrides: Vec<String>,
    config: ExperimentConfig,
}

/// The per-iteration record of one run.
pub struct CmTrace {
    trace: AlphaTrace,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn fail(e: Error) -> CmStatus {
    let status = match e {
        Error::Config(_) | Error::Input(_) => CmStatus::CmErrConfig,
        Error::Run(_) => CmStatus::CmErrRun,
        Error::Io { .. } => CmStatus::CmErrIo,
    };
    set_error(e.to_string());
    status
}

fn null(name: &str) -> CmStatus {
    set_error(format!("{name} is NULL"));
    CmStatus::CmErrNullPointer
}

/// Runs `f`, turning a panic into `CmErrPanic`.
fn guard(f: impl FnOnce() -> CmStatus) -> CmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            CmStatus::CmErrPanic
        }
    }
}

/// # Safety
/// `s` must be NULL or a valid NUL-terminated string.
unsafe fn utf8<'a>(s: *const c_char, name: &str) -> Result<&'a str, CmStatus> {
    if s.is_null() {
        return Err(null(name));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| fail(Error::config(format!("{name} is not valid UTF-8"))))
}

/// Message of the last failure on this thread, or an empty string. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn cm_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Creates a configuration with the defaults of `profile` (`"paper"` or `"fast"`;
/// NULL selects `"paper"`).
///
/// # Safety
/// `profile` must be NULL or a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cm_config_new(profile: *const c_char, out: *mut *mut CmConfig) -> CmStatus {
    guard(|| {
        if out.is_null() {
            return null("out");
        }
        let profile = if profile.is_null() {
            Profile::Paper
        } else {
            match utf8(profile, "profile").map(str::parse::<Profile>) {
                Ok(Ok(p)) => p,
                Ok(Err(e)) => return fail(e),
                Err(s) => return s,
            }
        };
        match parse_config(Some(profile), None, None, &[]) {
            Ok(config) => {
                *out = Box::into_raw(Box::new(CmConfig {
                    profile,
                    overrides: Vec::new(),
                    config,
                }));
                CmStatus::CmOk
            }
            Err(e) => fail(e),
        }
    })
}

/// Sets a dotted configuration key, e.g. `("run.alpha_iters", "50")`. On failure the
/// configuration is left unchanged.
///
/// # Safety
/// `config` must come from `cm_config_new`; `key` and `value` must be NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn cm_config_set(config: *mut CmConfig, key: *const c_char, value: *const c_char) -> CmStatus {
    guard(|| {
        let Some(cfg) = config.as_mut() else {
            return null("config");
        };
        let (key, value) = match (utf8(key, "key"), utf8(value, "value")) {
            (Ok(k), Ok(v)) => (k, v),
            (Err(s), _) | (_, Err(s)) => return s,
        };
        let mut overrides = cfg.overrides.clone();
        overrides.push(format!("{key}={value}"));
        match parse_config(Some(cfg.profile), None, None, &overrides) {
            Ok(c) => {
                cfg.config = c;
                cfg.overrides = overrides;
                CmStatus::CmOk
            }
            Err(e) => fail(e),
        }
    })
}

/// # Safety
/// `config` must be NULL or come from `cm_config_new` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cm_config_free(config: *mut CmConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Trains both direction models and runs the meta-learning loop once.
///
/// # Safety
/// `config` must come from `cm_config_new`; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cm_run_single(config: *const CmConfig, seed: u64, out: *mut *mut CmTrace) -> CmStatus {
    guard(|| {
        let Some(cfg) = config.as_ref() else {
            return null("config");
        };
        if out.is_null() {
            return null("out");
        }
        match run_single(&cfg.config.run, seed) {
            Ok(trace) => {
                *out = Box::into_raw(Box::new(CmTrace { trace }));
                CmStatus::CmOk
            }
            Err(e) => fail(e),
        }
    })
}

/// Number of recorded iterations (0 for NULL).
///
/// # Safety
/// `trace` must be NULL or a live trace handle.
#[no_mangle]
pub unsafe extern "C" fn cm_trace_len(trace: *const CmTrace) -> usize {
    trace.as_ref().map_or(0, |t| t.trace.len())
}

/// Final `sigma(alpha)`, or NaN for an empty or NULL trace.
///
/// # Safety
/// `trace` must be NULL or a live trace handle.
#[no_mangle]
pub unsafe extern "C" fn cm_trace_final_sigma(trace: *const CmTrace) -> f64 {
    trace.as_ref().and_then(|t| t.trace.final_sigma()).unwrap_or(f64::NAN)
}

/// Values at 0-based iteration `index`. Any output pointer may be NULL.
///
/// # Safety
/// `trace` must be a live trace handle; non-NULL outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn cm_trace_get(
    trace: *const CmTrace,
    index: usize,
    sigma: *mut f64,
    elbo_xy: *mut f64,
    elbo_yx: *mut f64,
) -> CmStatus {
    let Some(t) = trace.as_ref() else {
        return null("trace");
    };
    let t = &t.trace;
    if index >= t.len() {
        return fail(Error::Input(format!("index {index} out of range for {} iterations", t.len())));
    }
    for (dst, v) in [(sigma, t.sigmas[index]), (elbo_xy, t.elbo_xy[index]), (elbo_yx, t.elbo_yx[index])] {
        if !dst.is_null() {
            *dst = v;
        }
    }
    CmStatus::CmOk
}

/// Writes the trace as CSV (`run_id,iteration,sigma_alpha,elbo_xy,elbo_yx`).
///
/// # Safety
/// `trace` must be a live trace handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn cm_trace_write_csv(trace: *const CmTrace, run_id: usize, path: *const c_char) -> CmStatus {
    guard(|| {
        let Some(t) = trace.as_ref() else {
            return null("trace");
        };
        let path = match utf8(path, "path") {
            Ok(p) => Path::new(p),
            Err(s) => return s,
        };
        let file = match std::fs::File::create(path) {
            Ok(f) => f,
            Err(e) => return fail(Error::io(path, e)),
        };
        match t.trace.write_csv(run_id, std::io::BufWriter::new(file)) {
            Ok(()) => CmStatus::CmOk,
            Err(e) => fail(e),
        }
    })
}

/// # Safety
/// `trace` must be NULL or a live trace handle that is not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cm_trace_free(trace: *mut CmTrace) {
    if !trace.is_null() {
        drop(Box::from_raw(trace));
    }
}

/// Meta-objective for structural parameter `alpha` and the two log-likelihoods.
#[no_mangle]
pub extern "C" fn cm_r_loss(alpha: f64, l_xy: f64, l_yx: f64) -> f64 {
    r_loss(alpha, l_xy, l_yx)
}

/// Derivative of `cm_r_loss` with respect to `alpha`.
#[no_mangle]
pub extern "C" fn cm_r_grad(alpha: f64, l_xy: f64, l_yx: f64) -> f64 {
    r_grad(alpha, l_xy, l_yx)
}

fn vote_config(voters: usize, majority: f64) -> VoteConfig {
    VoteConfig {
        voters,
        majority,
        ..VoteConfig::default()
    }
}

/// Probabilities of the three verdicts of `voters` independent runs that vote X->Y with
/// probability `p` and Y->X with probability `q`; written to `out[0..3]` as
/// (X->Y, Y->X, none).
///
/// # Safety
/// `out` must point to three writable doubles.
#[no_mangle]
pub unsafe extern "C" fn cm_verdict_probabilities(p: f64, q: f64, voters: usize, majority: f64, out: *mut f64) -> CmStatus {
    guard(|| {
        if out.is_null() {
            return null("out");
        }
        match verdict_probabilities(p, q, &vote_config(voters, majority)) {
            Ok(a) => {
                let dst = std::slice::from_raw_parts_mut(out, 3);
                dst.copy_from_slice(&[a.x_to_y, a.y_to_x, a.no_causality]);
                CmStatus::CmOk
            }
            Err(e) => fail(e),
        }
    })
}

/// Plurality vote over `n` final `sigma(alpha)` values with inclusive cutoffs.
/// `counts` (may be NULL) receives (X->Y, Y->X, abstain) ballots.
///
/// # Safety
/// `sigmas` must point to `n` doubles, `verdict` must be writable and `counts`, if not
/// NULL, must point to three writable `size_t`.
#[no_mangle]
pub unsafe extern "C" fn cm_tally(
    sigmas: *const f64,
    n: usize,
    majority: f64,
    pos_cutoff: f64,
    neg_cutoff: f64,
    verdict: *mut CmVerdict,
    counts: *mut usize,
) -> CmStatus {
    guard(|| {
        if sigmas.is_null() {
            return null("sigmas");
        }
        if verdict.is_null() {
            return null("verdict");
        }
        let cfg = VoteConfig {
            pos_cutoff,
            neg_cutoff,
            ..vote_config(n, majority)
        };
        let ballots: Vec<_> = std::slice::from_raw_parts(sigmas, n)
            .iter()
            .map(|&s| ballot_for(s, &cfg))
            .collect();
        match tally(&ballots, &cfg) {
            Ok(o) => {
                *verdict = match o.verdict {
                    Verdict::XToY => CmVerdict::CmVerdictXToY,
                    Verdict::YToX => CmVerdict::CmVerdictYToX,
                    Verdict::NoCausality => CmVerdict::CmVerdictNone,
                };
                if !counts.is_null() {
                    let t = o.tallies;
                    std::slice::from_raw_parts_mut(counts, 3).copy_from_slice(&[t.pos, t.neg, t.abstain]);
                }
                CmStatus::CmOk
            }
            Err(e) => fail(e),
        }
    })
}
