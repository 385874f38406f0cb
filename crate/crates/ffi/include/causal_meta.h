#ifndef CAUSAL_META_H
#define CAUSAL_META_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes; the nonzero values match the CLI exit codes where they overlap.
typedef enum CmStatus {
  CM_OK = 0,
  // Invalid configuration or arguments.
  CM_ERR_CONFIG = 2,
  // Numerical failure while running.
  CM_ERR_RUN = 3,
  CM_ERR_IO = 4,
  // A required pointer argument was NULL.
  CM_ERR_NULL_POINTER = 5,
  // Internal panic caught at the boundary.
  CM_ERR_PANIC = 6,
} CmStatus;

typedef enum CmVerdict {
  CM_VERDICT_Y_TO_X = -1,
  CM_VERDICT_NONE = 0,
  CM_VERDICT_X_TO_Y = 1,
} CmVerdict;

// Experiment configuration: profile defaults plus `key=value` overrides.
typedef struct CmConfig CmConfig;

// The per-iteration record of one run.
typedef struct CmTrace CmTrace;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failure on this thread, or an empty string. The pointer stays
// valid until the next failing call on the same thread.
const char *cm_last_error(void);

// Creates a configuration with the defaults of `profile` (`"paper"` or `"fast"`;
// NULL selects `"paper"`).
//
// # Safety
// `profile` must be NULL or a NUL-terminated string; `out` must be writable.
enum CmStatus cm_config_new(const char *profile, struct CmConfig **out);

// Sets a dotted configuration key, e.g. `("run.alpha_iters", "50")`. On failure the
// configuration is left unchanged.
//
// # Safety
// `config` must come from `cm_config_new`; `key` and `value` must be NUL-terminated strings.
enum CmStatus cm_config_set(struct CmConfig *config, const char *key, const char *value);

// # Safety
// `config` must be NULL or come from `cm_config_new` and not be used afterwards.
void cm_config_free(struct CmConfig *config);

// Trains both direction models and runs the meta-learning loop once.
//
// # Safety
// `config` must come from `cm_config_new`; `out` must be writable.
enum CmStatus cm_run_single(const struct CmConfig *config, uint64_t seed, struct CmTrace **out);

// Number of recorded iterations (0 for NULL).
//
// # Safety
// `trace` must be NULL or a live trace handle.
size_t cm_trace_len(const struct CmTrace *trace);

// Final `sigma(alpha)`, or NaN for an empty or NULL trace.
//
// # Safety
// `trace` must be NULL or a live trace handle.
double cm_trace_final_sigma(const struct CmTrace *trace);

// Values at 0-based iteration `index`. Any output pointer may be NULL.
//
// # Safety
// `trace` must be a live trace handle; non-NULL outputs must be writable.
enum CmStatus cm_trace_get(const struct CmTrace *trace,
                           size_t index,
                           double *sigma,
                           double *elbo_xy,
                           double *elbo_yx);

// Writes the trace as CSV (`run_id,iteration,sigma_alpha,elbo_xy,elbo_yx`).
//
// # Safety
// `trace` must be a live trace handle and `path` a NUL-terminated string.
enum CmStatus cm_trace_write_csv(const struct CmTrace *trace, size_t run_id, const char *path);

// # Safety
// `trace` must be NULL or a live trace handle that is not used afterwards.
void cm_trace_free(struct CmTrace *trace);

// Meta-objective for structural parameter `alpha` and the two log-likelihoods.
double cm_r_loss(double alpha, double l_xy, double l_yx);

// Derivative of `cm_r_loss` with respect to `alpha`.
double cm_r_grad(double alpha, double l_xy, double l_yx);

// Probabilities of the three verdicts of `voters` independent runs that vote X->Y with
// probability `p` and Y->X with probability `q`; written to `out[0..3]` as
// (X->Y, Y->X, none).
//
// # Safety
// `out` must point to three writable doubles.
enum CmStatus cm_verdict_probabilities(double p,
                                       double q,
                                       size_t voters,
                                       double majority,
                                       double *out);

// Plurality vote over `n` final `sigma(alpha)` values with inclusive cutoffs.
// `counts` (may be NULL) receives (X->Y, Y->X, abstain) ballots.
//
// # Safety
// `sigmas` must point to `n` doubles, `verdict` must be writable and `counts`, if not
// NULL, must point to three writable `size_t`.
enum CmStatus cm_tally(const double *sigmas,
                       size_t n,
                       double majority,
                       double pos_cutoff,
                       double neg_cutoff,
                       enum CmVerdict *verdict,
                       size_t *counts);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CAUSAL_META_H */
