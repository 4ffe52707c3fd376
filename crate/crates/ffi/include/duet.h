#ifndef DUET_H
#define DUET_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum DuetStatus {
  DUET_STATUS_OK = 0,
  DUET_STATUS_NULL_POINTER = 1,
  DUET_STATUS_INVALID_ARGUMENT = 2,
  DUET_STATUS_DIMENSION_MISMATCH = 3,
  DUET_STATUS_NUMERICAL = 4,
  DUET_STATUS_EVALUATOR_FAILURE = 5,
  DUET_STATUS_IO = 6,
  DUET_STATUS_INVALID_LOG = 7,
  DUET_STATUS_PANIC = 8,
} DuetStatus;

/**
 * Opaque Gaussian-process state over mixing ratios.
 */
typedef struct DuetGp DuetGp;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null if the last call
 * succeeded. The pointer stays valid until the next call on this thread.
 */
const char *duet_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *duet_version(void);

/**
 * Create an empty GP over `dim` domains with a unit-variance squared
 * exponential kernel. Targets are used as given (no standardization).
 *
 * # Safety
 * `out_gp` must be a valid pointer to writable storage for one pointer.
 */
enum DuetStatus duet_gp_new(uintptr_t dim, double lengthscale, double zeta, struct DuetGp **out_gp);

/**
 * Release a GP handle. Null is ignored.
 *
 * # Safety
 * `gp` must come from [`duet_gp_new`] and not have been freed already.
 */
void duet_gp_free(struct DuetGp *gp);

/**
 * Number of observations held by the GP; 0 for a null handle.
 *
 * # Safety
 * `gp` must be null or a live handle.
 */
uintptr_t duet_gp_len(const struct DuetGp *gp);

/**
 * Add the observation `(ratio, target)`. The ratio is normalized to sum to
 * one. On failure the handle is unchanged.
 *
 * # Safety
 * `gp` must be a live handle and `ratio` must point to `dim` doubles.
 */
enum DuetStatus duet_gp_append(struct DuetGp *gp,
                               const double *ratio,
                               uintptr_t dim,
                               double target);

/**
 * Posterior mean and variance at `query`.
 *
 * # Safety
 * `gp` must be a live handle, `query` must point to `dim` doubles and the
 * output pointers must be writable.
 */
enum DuetStatus duet_gp_posterior(const struct DuetGp *gp,
                                  const double *query,
                                  uintptr_t dim,
                                  double *out_mean,
                                  double *out_variance);

/**
 * Refit the lengthscale by maximum marginal likelihood over the default
 * grid and store it in the handle. Needs at least two observations.
 *
 * # Safety
 * `gp` must be a live handle; `out_lengthscale` may be null.
 */
enum DuetStatus duet_gp_fit_lengthscale(struct DuetGp *gp, double *out_lengthscale);

/**
 * Minimize `μ − β·σ` over the simplex and write the proposed ratio to
 * `out_ratio` (length `dim`). `n_candidates == 0` selects the default.
 *
 * # Safety
 * `gp` must be a live handle and `out_ratio` must point to `dim` writable
 * doubles.
 */
enum DuetStatus duet_propose_ratio(const struct DuetGp *gp,
                                   double beta,
                                   uintptr_t n_candidates,
                                   uint64_t seed,
                                   double *out_ratio,
                                   uintptr_t dim);

/**
 * Density of the minimum of `k` truncated-exponential draws at `u`.
 *
 * # Safety
 * `out` must be writable.
 */
enum DuetStatus duet_order_stat_pdf(double u,
                                    double rate,
                                    double cutoff,
                                    uintptr_t k,
                                    double *out_value);

/**
 * CDF of the minimum of `k` truncated-exponential draws at `u`.
 *
 * # Safety
 * `out` must be writable.
 */
enum DuetStatus duet_order_stat_cdf(double u,
                                    double rate,
                                    double cutoff,
                                    uintptr_t k,
                                    double *out_value);

/**
 * Constant `A_{c,k}` of the average-regret bound.
 *
 * # Safety
 * `out_value` must be writable.
 */
enum DuetStatus duet_bound_constant(double c, uintptr_t k, double *out_value);

/**
 * High-probability bound on the average regret.
 *
 * # Safety
 * `out_value` must be writable.
 */
enum DuetStatus duet_average_regret_bound(double c, uintptr_t k, double delta, double *out_value);

/**
 * Map `n` influence values to sampling probabilities. A non-positive
 * `shift_epsilon` selects the relative default.
 *
 * # Safety
 * `influences` must point to `n` doubles and `out_probs` to `n` writable
 * doubles.
 */
enum DuetStatus duet_normalize_influences(const double *influences,
                                          uintptr_t n,
                                          double shift_epsilon,
                                          double *out_probs);

/**
 * Run the optimizer from a JSON configuration file, writing the run
 * directory to `output_dir` (or the directory named in the file when null).
 *
 * # Safety
 * `config_path` must be a NUL-terminated string; `output_dir` may be null.
 */
enum DuetStatus duet_run_from_config(const char *config_path, const char *output_dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DUET_H */
