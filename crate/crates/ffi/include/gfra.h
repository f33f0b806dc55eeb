#ifndef GFRA_H
#define GFRA_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum GfraStatus {
  GFRA_STATUS_OK = 0,
  GFRA_STATUS_NULL_POINTER = 1,
  GFRA_STATUS_INVALID_CONFIG = 2,
  GFRA_STATUS_DIMENSION_MISMATCH = 3,
  GFRA_STATUS_NUMERICAL = 4,
  GFRA_STATUS_IO = 5,
  GFRA_STATUS_FORMAT = 6,
  GFRA_STATUS_BUFFER_TOO_SMALL = 7,
  GFRA_STATUS_PANIC = 8,
} GfraStatus;

typedef enum GfraSolver {
  GFRA_SOLVER_AMP = 0,
  GFRA_SOLVER_AMP_BP = 1,
  GFRA_SOLVER_LAMP = 2,
  GFRA_SOLVER_LAMP_BP = 3,
} GfraSolver;

/**
 * Expanded dictionary drawn from a seeded spreading pool.
 */
typedef struct GfraDictionary GfraDictionary;

/**
 * Recovered signal matrix.
 */
typedef struct GfraEstimate GfraEstimate;

/**
 * Trained LAMP parameters.
 */
typedef struct GfraLampParams GfraLampParams;

/**
 * One realization with its noisy observation.
 */
typedef struct GfraTrial GfraTrial;

/**
 * Scalar part of the system configuration (per-user path-loss overrides
 * are not exposed).
 */
typedef struct GfraSystemConfig {
  size_t n_users;
  size_t n_sequences;
  size_t seq_len;
  size_t guard;
  size_t max_delay;
  size_t n_pilot;
  size_t max_data;
  size_t n_antennas;
  size_t n_active;
  /**
   * `INFINITY` disables noise.
   */
  double snr_db;
  double path_loss_default;
  size_t modulation_order;
} GfraSystemConfig;

/**
 * AMP settings with a column-scaled threshold `α = alpha·√c` and a support
 * threshold of `delta_scale` times the median pseudo-data row norm.
 */
typedef struct GfraAmpConfig {
  size_t n_iters;
  double alpha;
  double delta_scale;
  double stop_tol;
} GfraAmpConfig;

typedef struct GfraComplex {
  double re;
  double im;
} GfraComplex;

typedef struct GfraMetrics {
  double f1;
  double precision_mu_p;
  double recall_mu_r;
  /**
   * NaN when the true pilot block is zero.
   */
  double nmse_db;
  double mu_data;
  size_t n_active;
  size_t recovered_users;
  size_t collisions;
  size_t misdetections;
  size_t false_alarms;
} GfraMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf` (NUL-terminated,
 * truncated to `len`) and returns the full message length plus one.
 *
 * # Safety
 * `buf` must be null or valid for `len` bytes.
 */
size_t gfra_last_error_message(char *buf, size_t len);

/**
 * Library version as a static NUL-terminated string.
 */
const char *gfra_version(void);

/**
 * # Safety
 * `out` must be null or writable.
 */
enum GfraStatus gfra_system_config_default(struct GfraSystemConfig *out);

/**
 * # Safety
 * `out` must be null or writable.
 */
enum GfraStatus gfra_amp_config_default(struct GfraAmpConfig *out);

/**
 * Draws the spreading pool from `seed` and expands it for the guard time.
 *
 * # Safety
 * `cfg` must be null or readable; `out` must be null or writable.
 */
enum GfraStatus gfra_dictionary_new(const struct GfraSystemConfig *cfg,
                                    uint64_t seed,
                                    struct GfraDictionary **out);

/**
 * # Safety
 * `dict` must be null or a live handle; the out-pointers null or writable.
 */
enum GfraStatus gfra_dictionary_shape(const struct GfraDictionary *dict,
                                      size_t *rows,
                                      size_t *cols);

/**
 * # Safety
 * `dict` must be null or a handle not yet freed.
 */
void gfra_dictionary_free(struct GfraDictionary *dict);

/**
 * Draws a realization and its observation from explicit seeds.
 *
 * # Safety
 * Pointers must be null or valid; `out` writable.
 */
enum GfraStatus gfra_trial_new(const struct GfraSystemConfig *cfg,
                               const struct GfraDictionary *dict,
                               uint64_t realization_seed,
                               uint64_t noise_seed,
                               struct GfraTrial **out);

/**
 * Copies the observation `Y` (column-major). With a null `buf` only the
 * shape is written.
 *
 * # Safety
 * `buf` must be null or valid for `len` entries; other pointers as usual.
 */
enum GfraStatus gfra_trial_observation(const struct GfraTrial *trial,
                                       struct GfraComplex *buf,
                                       size_t len,
                                       size_t *rows,
                                       size_t *cols);

/**
 * Copies the true signal matrix `X` (column-major).
 *
 * # Safety
 * As [`gfra_trial_observation`].
 */
enum GfraStatus gfra_trial_signal(const struct GfraTrial *trial,
                                  struct GfraComplex *buf,
                                  size_t len,
                                  size_t *rows,
                                  size_t *cols);

/**
 * # Safety
 * `trial` must be null or a handle not yet freed.
 */
void gfra_trial_free(struct GfraTrial *trial);

/**
 * Loads a parameter file written by the trainer.
 *
 * # Safety
 * `path` must be null or a NUL-terminated string; `out` writable.
 */
enum GfraStatus gfra_lamp_params_load(const char *path, struct GfraLampParams **out);

/**
 * # Safety
 * `params` must be null or a handle not yet freed.
 */
void gfra_lamp_params_free(struct GfraLampParams *params);

/**
 * Recovers the signal matrix from a column-major observation of
 * `rows × cols` entries. `amp` is read by the model-driven solvers and
 * `params` by the learned ones; either may be null when unused.
 *
 * # Safety
 * `y` must be valid for `rows·cols` entries; other pointers null or valid.
 */
enum GfraStatus gfra_solve(enum GfraSolver solver,
                           const struct GfraSystemConfig *cfg,
                           const struct GfraDictionary *dict,
                           const struct GfraAmpConfig *amp,
                           const struct GfraLampParams *params,
                           const struct GfraComplex *y,
                           size_t rows,
                           size_t cols,
                           struct GfraEstimate **out);

/**
 * Copies an estimate (column-major).
 *
 * # Safety
 * As [`gfra_trial_observation`].
 */
enum GfraStatus gfra_estimate_copy(const struct GfraEstimate *est,
                                   struct GfraComplex *buf,
                                   size_t len,
                                   size_t *rows,
                                   size_t *cols);

/**
 * # Safety
 * `est` must be null or a handle not yet freed.
 */
void gfra_estimate_free(struct GfraEstimate *est);

/**
 * Runs detection with default thresholds on an estimate of `trial` and
 * scores it against the realization.
 *
 * # Safety
 * Pointers must be null or valid; `out` writable.
 */
enum GfraStatus gfra_evaluate(const struct GfraTrial *trial,
                              const struct GfraEstimate *est,
                              struct GfraMetrics *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GFRA_H */
