#ifndef NEWS_ENTROPY_H
#define NEWS_ENTROPY_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes.
 */
typedef enum {
  NE_STATUS_OK = 0,
  NE_STATUS_NULL_POINTER = 1,
  NE_STATUS_INVALID_UTF8 = 2,
  NE_STATUS_IO = 3,
  NE_STATUS_PARSE = 4,
  NE_STATUS_CONFIG = 5,
  NE_STATUS_INVALID_ARGUMENT = 6,
  NE_STATUS_NUMERIC = 7,
  NE_STATUS_RANK_DEFICIENT = 8,
  NE_STATUS_PANIC = 9,
} NeStatus;

/**
 * A fitted regression.
 */
typedef struct NeRegression NeRegression;

/**
 * A loaded model snapshot with its embedding table.
 */
typedef struct NeSnapshot NeSnapshot;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread; empty if none. Valid until the next call that
 * fails on the same thread.
 */
const char *ne_last_error(void);

/**
 * Trainable parameter count of an LSTM language model with the given dimensions.
 */
size_t ne_param_count(size_t d_in, size_t d_h, size_t d_out);

/**
 * Loads a snapshot file and rebuilds its embedding table.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
NeStatus ne_snapshot_load(const char *path, NeSnapshot **out);

/**
 * # Safety
 * `handle` must come from [`ne_snapshot_load`] and not be used afterwards. Null is ignored.
 */
void ne_snapshot_free(NeSnapshot *handle);

/**
 * Output size of the snapshot: vocabulary words plus the unknown-word class.
 *
 * # Safety
 * `handle` and `out` must be valid pointers.
 */
NeStatus ne_snapshot_output_size(const NeSnapshot *handle, size_t *out);

/**
 * Mean per-token negative log-likelihood of `text` (nats), with the recurrent state carried
 * across segments of `segment_len` tokens.
 *
 * # Safety
 * `handle` and `out` must be valid pointers; `text` a NUL-terminated string.
 */
NeStatus ne_snapshot_score(const NeSnapshot *handle,
                           const char *text,
                           size_t segment_len,
                           double *out);

/**
 * The `k` most probable next words after `prefix`. Writes up to `k` probabilities to `probs`
 * and the matching output ids to `ids`, and the number written to `written`.
 *
 * # Safety
 * `probs` and `ids` must hold at least `k` elements; other pointers must be valid.
 */
NeStatus ne_snapshot_top_k(const NeSnapshot *handle,
                           const char *prefix,
                           size_t k,
                           size_t *ids,
                           double *probs,
                           size_t *written);

/**
 * Copies the word with output id `id` into `buf` as a NUL-terminated string. `needed` receives
 * the buffer size required, including the terminator; nothing is copied if `len` is smaller.
 *
 * # Safety
 * `buf` must hold `len` bytes (or be null with `len == 0`); other pointers must be valid.
 */
NeStatus ne_snapshot_word(const NeSnapshot *handle,
                          size_t id,
                          char *buf,
                          size_t len,
                          size_t *needed);

/**
 * Least squares of `y` (length `n`) on the `n x k` row-major design `x` with Newey-West
 * covariance of `lags` lags. Include a column of ones for an intercept.
 *
 * # Safety
 * `y` must hold `n` values, `x` `n * k` values; `out` must be valid.
 */
NeStatus ne_ols_hac(const double *y,
                    const double *x,
                    size_t n,
                    size_t k,
                    size_t lags,
                    NeRegression **out);

/**
 * # Safety
 * `handle` must come from [`ne_ols_hac`] and not be used afterwards. Null is ignored.
 */
void ne_regression_free(NeRegression *handle);

/**
 * Coefficient, standard error and t-statistic of regressor `j`.
 *
 * # Safety
 * All pointers must be valid.
 */
NeStatus ne_regression_coef(const NeRegression *handle,
                            size_t j,
                            double *coef,
                            double *se,
                            double *t);

/**
 * HAC covariance entry `(i, j)`.
 *
 * # Safety
 * All pointers must be valid.
 */
NeStatus ne_regression_cov(const NeRegression *handle, size_t i, size_t j, double *out);

/**
 * R-squared and observation count.
 *
 * # Safety
 * All pointers must be valid.
 */
NeStatus ne_regression_summary(const NeRegression *handle, double *r2, size_t *n_obs);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NEWS_ENTROPY_H */
