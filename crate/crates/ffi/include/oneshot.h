#ifndef ONESHOT_H
#define ONESHOT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result code of every entry point.
 */
typedef enum OsStatus {
  OS_STATUS_OK = 0,
  /*
   A required pointer was null.
   */
  OS_STATUS_NULL_POINTER = 1,
  /*
   Invalid input: domain, dimension, data or configuration error.
   */
  OS_STATUS_INVALID = 2,
  /*
   Numerical failure: overflow, singular matrix, non-convergence, infeasible design.
   */
  OS_STATUS_NUMERIC = 3,
  OS_STATUS_IO = 4,
  /*
   A caller buffer is too small.
   */
  OS_STATUS_BUFFER_TOO_SMALL = 5,
  /*
   An internal panic was caught at the boundary.
   */
  OS_STATUS_PANIC = 6,
} OsStatus;

/*
 Fit outcome codes written by [`os_fit`].
 */
typedef enum OsFitStatus {
  OS_FIT_STATUS_CONVERGED = 0,
  OS_FIT_STATUS_MAX_ITERATIONS = 1,
  OS_FIT_STATUS_DIVERGED = 2,
  OS_FIT_STATUS_NON_FINITE = 3,
} OsFitStatus;

/*
 Opaque grouped data set.
 */
typedef struct OsDataset OsDataset;

/*
 Summary of a robust test of `θ = θ₀`.
 */
typedef struct OsTestResult {
  double lambda_stat;
  double lambda_star;
  double critical;
  size_t rank;
  bool reject;
  bool fit_converged;
} OsTestResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Builds a data set from `n_groups` rows. `x` holds `n_groups * dim` covariates row by row.

 # Safety
 `tau`, `k`, `n` must point to `n_groups` values, `x` to `n_groups * dim` values, and
 `out` to writable storage for one pointer.
 */
enum OsStatus os_dataset_new(size_t n_groups,
                             size_t dim,
                             const double *tau,
                             const uint32_t *k,
                             const uint32_t *n,
                             const double *x,
                             struct OsDataset **out_dataset);

/*
 Reads a data set from a CSV file with header `group,tau,k,n,x1,...,xJ`.

 # Safety
 `path` must be a NUL-terminated string and `out` writable storage for one pointer.
 */
enum OsStatus os_dataset_from_csv(const char *path, struct OsDataset **out_dataset);

/*
 Releases a data set; null is ignored.

 # Safety
 `dataset` must come from this library and not be used afterwards.
 */
void os_dataset_free(struct OsDataset *dataset);

/*
 Number of groups and covariates of a data set.

 # Safety
 `dataset` must be a live handle; the outputs must be writable.
 */
enum OsStatus os_dataset_shape(const struct OsDataset *dataset,
                               size_t *out_groups,
                               size_t *out_dim);

/*
 Fits the model (`beta = 0` for maximum likelihood) by coordinate descent from `theta0`.
 The estimate is written to `out_theta` (`len` values).

 # Safety
 `theta0` and `out_theta` must hold `len` values; the scalar outputs must be writable.
 */
enum OsStatus os_fit(const struct OsDataset *dataset,
                     double beta,
                     const double *theta0,
                     size_t len,
                     double h,
                     double tol,
                     size_t max_iter,
                     double *out_theta,
                     enum OsFitStatus *out_status,
                     size_t *out_iterations);

/*
 Failure probability `F(τ)` of a group with covariates `x` (`dim` values).

 # Safety
 `theta` must hold `2 * dim` values and `x` `dim` values.
 */
enum OsStatus os_group_prob(const double *theta,
                            double tau,
                            const double *x,
                            size_t dim,
                            double *out_p);

/*
 Sandwich covariance `Σ_β` of `√K (θ̂_β - θ)` at `theta`, written row-major into
 `out_sigma`, which must hold `cap >= len * len` values.

 # Safety
 `theta` must hold `len` values and `out_sigma` `cap` values.
 */
enum OsStatus os_sandwich_covariance(const struct OsDataset *dataset,
                                     const double *theta,
                                     size_t len,
                                     double beta,
                                     double *out_sigma,
                                     size_t cap);

/*
 Divergence-based test of `θ = θ₀` at level `alpha_level`, estimator fitted from `θ₀`
 with default descent settings and the chi-square bound as critical value.

 # Safety
 `theta0` must hold `len` values and `out_result` be writable.
 */
enum OsStatus os_wdpd_test(const struct OsDataset *dataset,
                           const double *theta0,
                           size_t len,
                           double beta,
                           double alpha_level,
                           struct OsTestResult *out_result);

/*
 Design cost `c1 |Σ_β| + c2 Σ k_i F_i(τ_i)` of inspection times `tau` (one per group of
 `layout`). Infeasible designs give `+∞` with status `Ok`.

 # Safety
 `theta` must hold `len` values and `tau` one value per group.
 */
enum OsStatus os_design_cost(const struct OsDataset *layout,
                             const double *theta,
                             size_t len,
                             double beta,
                             double c1,
                             double c2,
                             const double *tau,
                             double *out_cost);

/*
 Copies the calling thread's last error message into `buf` (NUL-terminated, truncated
 to `cap - 1` bytes) and returns its full length in bytes, excluding the terminator.

 # Safety
 `buf` must be writable for `cap` bytes, or null when `cap` is 0.
 */
size_t os_last_error_message(char *buf, size_t cap);

/*
 Library version as a static NUL-terminated string.
 */
const char *os_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ONESHOT_H */
