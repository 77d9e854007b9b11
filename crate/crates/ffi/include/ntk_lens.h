#ifndef NTK_LENS_H
#define NTK_LENS_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every call.
 */
typedef enum NtkStatus {
  NTK_STATUS_OK = 0,
  NTK_STATUS_NULL_POINTER = 1,
  NTK_STATUS_CONFIG = 2,
  NTK_STATUS_SHAPE = 3,
  NTK_STATUS_INPUT = 4,
  NTK_STATUS_NUMERIC = 5,
  NTK_STATUS_CONDITIONING = 6,
  NTK_STATUS_CAPACITY = 7,
  NTK_STATUS_DIVERGENCE = 8,
  NTK_STATUS_CONDITION_VIOLATED = 9,
  NTK_STATUS_METRIC = 10,
  NTK_STATUS_IO = 11,
  NTK_STATUS_PARSE = 12,
  NTK_STATUS_INTERNAL = 13,
  NTK_STATUS_PANIC = 14,
} NtkStatus;

typedef enum NtkParametrization {
  NTK_PARAMETRIZATION_NTP = 0,
  NTK_PARAMETRIZATION_SP = 1,
} NtkParametrization;

/**
 * Kernel regression posterior with zero prior mean.
 */
typedef struct NtkGp NtkGp;

/**
 * MLP architecture with its parameters.
 */
typedef struct NtkNetwork NtkNetwork;

/**
 * Forgetting and accuracy summaries of one accuracy matrix.
 */
typedef struct NtkContinualMetrics {
  double average_forgetting;
  double average_forgetting_inclusive;
  double average_accuracy;
  double learning_accuracy;
  double param_distance;
} NtkContinualMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next call on the same thread.
 */
const char *ntk_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *ntk_version(void);

/**
 * Builds an MLP with layer widths `widths[0..n_widths]` (input first,
 * output last), ReLU hidden layers and Gaussian initialization from `seed`.
 *
 * # Safety
 * `widths` must point to `n_widths` values and `out` must be writable.
 */
enum NtkStatus ntk_network_new(const size_t *widths,
                               size_t n_widths,
                               enum NtkParametrization parametrization,
                               bool bias,
                               uint64_t seed,
                               struct NtkNetwork **out);

/**
 * # Safety
 * `net` must come from [`ntk_network_new`] and not be used afterwards.
 */
void ntk_network_free(struct NtkNetwork *net);

/**
 * Input dimension, output dimension and parameter count; any output
 * pointer may be null.
 *
 * # Safety
 * `net` must be a live handle.
 */
enum NtkStatus ntk_network_shape(const struct NtkNetwork *net,
                                 size_t *input_dim,
                                 size_t *output_dim,
                                 size_t *num_params);

/**
 * Copies the flattened parameters into `out[0..len]`.
 *
 * # Safety
 * `net` must be a live handle and `out` must hold `len` values.
 */
enum NtkStatus ntk_network_params(const struct NtkNetwork *net, double *out, size_t len);

/**
 * Network outputs for `n` inputs: `x` is `n x input_dim`, `out` is
 * `n x output_dim`.
 *
 * # Safety
 * Buffers must hold the stated number of values.
 */
enum NtkStatus ntk_network_forward(const struct NtkNetwork *net,
                                   const double *x,
                                   size_t n,
                                   double *out,
                                   size_t out_len);

/**
 * Empirical NTK Gram matrix at the network's parameters,
 * `(n * output_dim) x (n * output_dim)` with sample-major rows.
 *
 * # Safety
 * Buffers must hold the stated number of values.
 */
enum NtkStatus ntk_network_entk(const struct NtkNetwork *net,
                                const double *x,
                                size_t n,
                                double *out,
                                size_t out_len);

/**
 * Infinite-width NTK Gram matrix of a depth-`depth` ReLU MLP with bias
 * variance `beta2` between `x1` (`n1 x d`) and `x2` (`n2 x d`).
 *
 * # Safety
 * Buffers must hold the stated number of values.
 */
enum NtkStatus ntk_analytic_gram(size_t depth,
                                 double beta2,
                                 const double *x1,
                                 size_t n1,
                                 const double *x2,
                                 size_t n2,
                                 size_t d,
                                 double *out,
                                 size_t out_len);

/**
 * Conditions a zero-mean kernel regression on the `n x n` kernel `k` and
 * targets `y` with observation noise `noise` (zero allowed).
 *
 * # Safety
 * Buffers must hold the stated number of values; `out` must be writable.
 */
enum NtkStatus ntk_gp_fit(const double *k,
                          size_t n,
                          const double *y,
                          double noise,
                          struct NtkGp **out);

/**
 * Posterior means and variances at `m` test points from `K(X*, X)`
 * (`m x n`) and the prior variances `K(x*, x*)`. `var_out` may be null,
 * in which case `k_test_diag` is ignored.
 *
 * # Safety
 * `gp` must be a live handle and buffers must hold the stated values.
 */
enum NtkStatus ntk_gp_predict(const struct NtkGp *gp,
                              const double *k_test_train,
                              size_t m,
                              const double *k_test_diag,
                              double *mean_out,
                              double *var_out);

/**
 * # Safety
 * `gp` must come from [`ntk_gp_fit`] and not be used afterwards.
 */
void ntk_gp_free(struct NtkGp *gp);

/**
 * Continual-learning summaries. `accuracy` is `tasks x tasks` row-major;
 * only the lower triangle (stage `t` >= task `i`) is read. `w0` and `wt`
 * are the parameters before and after training, `p` values each.
 *
 * # Safety
 * Buffers must hold the stated number of values; `out` must be writable.
 */
enum NtkStatus ntk_continual_metrics(const double *accuracy,
                                     size_t tasks,
                                     const double *w0,
                                     const double *wt,
                                     size_t p,
                                     struct NtkContinualMetrics *out);

/**
 * Runs the experiment described by a TOML file, writing into `out_dir`.
 * `partial` (nullable) is set when some cells failed; the status is still
 * `NTK_STATUS_OK` in that case.
 *
 * # Safety
 * Strings must be NUL-terminated.
 */
enum NtkStatus ntk_run_experiment(const char *config_path, const char *out_dir, bool *partial);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NTK_LENS_H */
