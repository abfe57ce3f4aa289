#ifndef MIN_OPT_H
#define MIN_OPT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MinStatus {
  MIN_STATUS_OK = 0,
  MIN_STATUS_NULL_POINTER = 1,
  MIN_STATUS_INVALID_ARGUMENT = 2,
  MIN_STATUS_OUT_OF_SPACE = 3,
  MIN_STATUS_ORACLE = 4,
  MIN_STATUS_IO = 5,
  MIN_STATUS_MALFORMED = 6,
  MIN_STATUS_MODEL_MISMATCH = 7,
  MIN_STATUS_NUMERIC = 8,
  MIN_STATUS_INTERNAL = 9,
} MinStatus;

typedef struct MinDataset MinDataset;

typedef struct MinForwardModel MinForwardModel;

typedef struct MinInverseMap MinInverseMap;

typedef struct MinOracle MinOracle;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the calling thread's last error message into `buf` (NUL-terminated,
 * truncated to `len - 1` bytes) and returns the full message length.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t min_last_error(char *buf, size_t len);

/**
 * Library version as a static NUL-terminated string.
 */
const char *min_version(void);

/**
 * Builds an oracle from a registry name such as `branin` or `seq:L8A4:seed3`.
 *
 * # Safety
 * `name` must be a NUL-terminated string; `out` must be writable.
 */
enum MinStatus min_oracle_new(const char *name, struct MinOracle **out);

/**
 * # Safety
 * `o` must be null or a handle from `min_oracle_new` not yet freed.
 */
void min_oracle_free(struct MinOracle *o);

/**
 * Number of values in one input (coordinates, or sequence positions).
 *
 * # Safety
 * `o` must be a live oracle handle; `dim` must be writable.
 */
enum MinStatus min_oracle_input_dim(const struct MinOracle *o, size_t *dim);

/**
 * Context length; 0 for non-contextual oracles.
 *
 * # Safety
 * `o` must be a live oracle handle; `dim` must be writable.
 */
enum MinStatus min_oracle_context_dim(const struct MinOracle *o, size_t *dim);

/**
 * Scores `x` in the maximization convention. Categorical inputs are passed
 * as integral symbol values. Pass `context_len = 0` for non-contextual oracles.
 *
 * # Safety
 * `x` must hold `len` values, `context` `context_len` values; `y` must be writable.
 */
enum MinStatus min_oracle_evaluate(const struct MinOracle *o,
                                   const double *x,
                                   size_t len,
                                   const double *context,
                                   size_t context_len,
                                   double *y);

/**
 * Known optimum in the maximization convention; `*has` is false when unknown.
 *
 * # Safety
 * `o` must be a live oracle handle; `value` and `has` must be writable.
 */
enum MinStatus min_oracle_known_optimum(const struct MinOracle *o, double *value, bool *has);

/**
 * Samples `n` uniform records from the oracle, seeded by `seed`.
 *
 * # Safety
 * `o` must be a live oracle handle; `out` must be writable.
 */
enum MinStatus min_dataset_generate(const struct MinOracle *o,
                                    size_t n,
                                    uint64_t seed,
                                    struct MinDataset **out);

/**
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum MinStatus min_dataset_load(const char *path, struct MinDataset **out);

/**
 * # Safety
 * `d` must be a live dataset handle; `path` a NUL-terminated string.
 */
enum MinStatus min_dataset_save(const struct MinDataset *d, const char *path);

/**
 * # Safety
 * `d` must be null or a dataset handle not yet freed.
 */
void min_dataset_free(struct MinDataset *d);

/**
 * # Safety
 * `d` must be a live dataset handle; `len` must be writable.
 */
enum MinStatus min_dataset_len(const struct MinDataset *d, size_t *len);

/**
 * Copies the scores into `ys`, which must hold exactly the dataset length.
 *
 * # Safety
 * `d` must be a live dataset handle; `ys` must hold `len` writable values.
 */
enum MinStatus min_dataset_scores(const struct MinDataset *d, double *ys, size_t len);

/**
 * Per-record importance weights `p(y_i) / p_D(y_i)` for scores `ys`.
 * `tau` NaN selects the adaptive temperature.
 *
 * # Safety
 * `ys` and `weights` must each hold `n` values.
 */
enum MinStatus min_reweight(const double *ys,
                            size_t n,
                            size_t bins,
                            double lambda,
                            double tau,
                            double *weights);

/**
 * Exponentiated Rényi divergence `d2(p || q) = Σ p² / q`.
 *
 * # Safety
 * `p` and `q` must each hold `n` values; `out` must be writable.
 */
enum MinStatus min_renyi_d2(const double *p, const double *q, size_t n, double *out);

/**
 * Loads an inverse map checkpoint written by the CLI or library.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum MinStatus min_inverse_map_load(const char *path, struct MinInverseMap **out);

/**
 * # Safety
 * `m` must be null or an inverse map handle not yet freed.
 */
void min_inverse_map_free(struct MinInverseMap *m);

/**
 * Draws `n` inputs conditioned on score `y`, written row-major into `out`
 * (`n * input_dim` values; categorical symbols as integral values).
 *
 * # Safety
 * `m` must be a live handle; `context` must hold `context_len` values and
 * `out` `out_len` writable values.
 */
enum MinStatus min_inverse_map_sample(const struct MinInverseMap *m,
                                      double y,
                                      const double *context,
                                      size_t context_len,
                                      size_t n,
                                      uint64_t seed,
                                      double *out,
                                      size_t out_len);

/**
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum MinStatus min_forward_load(const char *path, struct MinForwardModel **out);

/**
 * # Safety
 * `m` must be null or a forward model handle not yet freed.
 */
void min_forward_free(struct MinForwardModel *m);

/**
 * Forward-model prediction at `x` in raw score units.
 *
 * # Safety
 * `x` must hold `len` values, `context` `context_len` values; `y` must be writable.
 */
enum MinStatus min_forward_predict(const struct MinForwardModel *m,
                                   const double *x,
                                   size_t len,
                                   const double *context,
                                   size_t context_len,
                                   double *y);

/**
 * Runs Approx-Infer with default settings. Writes the chosen input to `x`
 * (`x_len` must equal the input dimension), the forward prediction to
 * `prediction` and the feasibility flag to `feasible`.
 *
 * # Safety
 * All handles must be live; buffers must have the stated sizes.
 */
enum MinStatus min_approx_infer(const struct MinInverseMap *inv,
                                const struct MinForwardModel *fwd,
                                const struct MinDataset *data,
                                const double *context,
                                size_t context_len,
                                uint64_t seed,
                                double *x,
                                size_t x_len,
                                double *prediction,
                                bool *feasible);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MIN_OPT_H */
