#ifndef STGP_H
#define STGP_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible call.
typedef enum StgpStatus {
  STGP_STATUS_OK = 0,
  // A null pointer, bad string or out-of-range argument.
  STGP_STATUS_INVALID_ARGUMENT = 1,
  // Inconsistent configuration or a violated precondition.
  STGP_STATUS_CONFIG = 2,
  // A covariance matrix could not be factorized or a result degenerated.
  STGP_STATUS_NUMERICAL = 3,
  // Unusable input data.
  STGP_STATUS_DATA = 4,
  // An internal error; the library state is unaffected.
  STGP_STATUS_PANIC = 5,
} StgpStatus;

// Observation grid with missing cells.
typedef struct StgpGrid StgpGrid;

// Model parameters.
typedef struct StgpParams StgpParams;

// Sites on the projected plane.
typedef struct StgpSites StgpSites;

// Retained posterior samples of a fitted chain.
typedef struct StgpTrace StgpTrace;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, empty after a success.
// The pointer stays valid until the next call on this thread.
const char *stgp_last_error(void);

// Creates a site set from `n` interleaved `(x, y)` pairs.
//
// # Safety
// `xy` must point to `2n` doubles; `out` must be writable.
enum StgpStatus stgp_sites_new(const double *xy, uintptr_t n, struct StgpSites **out);

// # Safety
// `sites` must come from [`stgp_sites_new`] and not be freed twice.
void stgp_sites_free(struct StgpSites *sites);

// Parameters of the reference simulation study with the given `μ₀`.
//
// # Safety
// `mu0` must point to `n` doubles; `out` must be writable.
enum StgpStatus stgp_params_reference(const double *mu0, uintptr_t n, struct StgpParams **out);

// Parameters from a JSON object with the fields of the library's
// `ModelParams`.
//
// # Safety
// `json` must be a nul-terminated string; `out` must be writable.
enum StgpStatus stgp_params_from_json(const char *json, struct StgpParams **out);

// # Safety
// `params` must come from this library and not be freed twice.
void stgp_params_free(struct StgpParams *params);

// Creates an `n × t_max` grid; NaN entries are missing.
//
// # Safety
// `values` must point to `n * t_max` doubles; `out` must be writable.
enum StgpStatus stgp_grid_new(const double *values,
                              uintptr_t n,
                              uintptr_t t_max,
                              struct StgpGrid **out);

// # Safety
// `grid` must come from this library and not be freed twice.
void stgp_grid_free(struct StgpGrid *grid);

// Log joint density of the latent field `x` (`n × (t_max+1)`).
//
// # Safety
// Handles must be valid; `x` must point to `n * (t_max+1)` doubles.
enum StgpStatus stgp_state_log_density(const struct StgpParams *params,
                                       const struct StgpSites *sites,
                                       const double *x,
                                       uintptr_t t_max,
                                       double *out);

// Log density of the observed cells of `grid` given the latent field `x`.
//
// # Safety
// Handles must be valid; `x` must point to `n * (T+1)` doubles where `T`
// is the grid's time length.
enum StgpStatus stgp_obs_log_density(const struct StgpParams *params,
                                     const struct StgpSites *sites,
                                     const struct StgpGrid *grid,
                                     const double *x,
                                     double *out);

// Simulates `t_max` steps. Writes the latent field to `latent_out`
// (`n × (t_max+1)`) and the observations to `obs_out` (`n × t_max`).
//
// # Safety
// Handles must be valid; the output buffers must hold the stated sizes.
enum StgpStatus stgp_simulate(const struct StgpParams *params,
                              const struct StgpSites *sites,
                              uintptr_t t_max,
                              uint64_t seed,
                              double *latent_out,
                              double *obs_out);

// Runs the sampler with the default priors and tuning.
//
// # Safety
// Handles must be valid; `out` must be writable.
enum StgpStatus stgp_fit(const struct StgpGrid *grid,
                         const struct StgpSites *sites,
                         uintptr_t iterations,
                         uintptr_t burn_in,
                         uintptr_t thin,
                         uint64_t seed,
                         struct StgpTrace **out);

// Number of retained samples.
//
// # Safety
// `trace` must be a valid handle or null (giving 0).
uintptr_t stgp_trace_len(const struct StgpTrace *trace);

// Copies the samples of the scalar parameter `name` (for example
// `"beta1g"` or `"sigma2_f"`) into `buf`, which holds `len` doubles.
//
// # Safety
// `trace` must be valid, `name` nul-terminated and `buf` writable.
enum StgpStatus stgp_trace_scalar(const struct StgpTrace *trace,
                                  const char *name,
                                  double *buf,
                                  uintptr_t len);

// # Safety
// `trace` must come from this library and not be freed twice.
void stgp_trace_free(struct StgpTrace *trace);

// Leave-one-out coverage of the observed cells at interval `level`.
//
// # Safety
// Handles must be valid; the three outputs must be writable.
enum StgpStatus stgp_loo_coverage(const struct StgpGrid *grid,
                                  const struct StgpSites *sites,
                                  const struct StgpTrace *trace,
                                  double level,
                                  uint64_t seed,
                                  uintptr_t *hits,
                                  uintptr_t *total,
                                  double *mean_length);

// Lambert equal-area projection of longitude `psi` and latitude `phi`
// (radians).
//
// # Safety
// `x` and `y` must be writable.
enum StgpStatus stgp_lambert_project(double psi, double phi, double *x, double *y);

// Geometric approximation of `Cov(Y(s,t), Y(s*,t*))`.
//
// # Safety
// `params` must be valid; `s` and `s_star` must point to 2 doubles each.
enum StgpStatus stgp_approx_covariance(const struct StgpParams *params,
                                       const double *s,
                                       const double *s_star,
                                       uintptr_t t,
                                       uintptr_t t_star,
                                       double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* STGP_H */
