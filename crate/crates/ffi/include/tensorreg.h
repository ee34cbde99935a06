#ifndef TENSORREG_H
#define TENSORREG_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum TrFamily {
  TR_FAMILY_NORMAL = 0,
  TR_FAMILY_BERNOULLI = 1,
  TR_FAMILY_POISSON = 2,
} TrFamily;

typedef enum TrPenalty {
  TR_PENALTY_NONE = 0,
  TR_PENALTY_LASSO = 1,
  TR_PENALTY_RIDGE = 2,
  TR_PENALTY_ELASTIC_NET = 3,
  TR_PENALTY_SCAD = 4,
  TR_PENALTY_POWER = 5,
} TrPenalty;

// Result code of every fallible call.
typedef enum TrStatus {
  TR_STATUS_OK = 0,
  TR_STATUS_NULL_POINTER = 1,
  TR_STATUS_INVALID_ARGUMENT = 2,
  TR_STATUS_SINGULAR = 3,
  // The fit ran out of iterations; the best model is still returned.
  TR_STATUS_NOT_CONVERGED = 4,
  TR_STATUS_IO = 5,
  TR_STATUS_PARSE = 6,
  TR_STATUS_BUFFER_TOO_SMALL = 7,
  // A Rust panic was caught at the boundary.
  TR_STATUS_INTERNAL = 8,
} TrStatus;

// Opaque dataset handle.
typedef struct TrDataset TrDataset;

// Opaque fitted-model handle.
typedef struct TrModel TrModel;

// Fit settings. Start from [`tr_fit_options_default`].
typedef struct TrFitOptions {
  size_t rank;
  size_t restarts;
  size_t max_outer_iters;
  double epsilon;
  uint64_t seed;
  enum TrPenalty penalty;
  double rho;
  // Penalty shape; non-positive picks the family default.
  double lambda;
} TrFitOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failure on this thread, or null. The pointer stays
// valid until the next failing call on the same thread.
const char *tr_last_error(void);

struct TrFitOptions tr_fit_options_default(void);

// Builds a dataset of `n` samples. `x` holds the `n` tensors back to back,
// each of shape `dims[0..order]`; `z` is the `n x p0` covariate matrix in
// row-major order (null when `p0` is 0).
//
// # Safety
// All pointers must reference arrays of the stated sizes; `out` must be writable.
enum TrStatus tr_dataset_new(size_t n,
                             const size_t *dims,
                             size_t order,
                             const double *x,
                             const double *y,
                             size_t p0,
                             const double *z,
                             struct TrDataset **out);

// # Safety
// `dataset` must be null or a handle from [`tr_dataset_new`] not yet freed.
void tr_dataset_free(struct TrDataset *dataset);

// Fits a model of rank `options.rank`.
//
// # Safety
// `dataset` and `options` must be valid; `out` must be writable.
enum TrStatus tr_fit(const struct TrDataset *dataset,
                     enum TrFamily family,
                     const struct TrFitOptions *options,
                     struct TrModel **out);

// Fits ranks `1..=max_rank` and returns the BIC choice; `options.rank` is ignored.
//
// # Safety
// `dataset` and `options` must be valid; `out` must be writable.
enum TrStatus tr_select_rank(const struct TrDataset *dataset,
                             enum TrFamily family,
                             size_t max_rank,
                             const struct TrFitOptions *options,
                             struct TrModel **out);

// # Safety
// `model` must be null or a live handle.
void tr_model_free(struct TrModel *model);

// # Safety
// `model` must be a live handle.
size_t tr_model_rank(const struct TrModel *model);

// # Safety
// `model` must be a live handle.
size_t tr_model_order(const struct TrModel *model);

// Number of covariates `p0`.
//
// # Safety
// `model` must be a live handle.
size_t tr_model_num_covariates(const struct TrModel *model);

// # Safety
// `model` must be a live handle.
double tr_model_alpha(const struct TrModel *model);

// # Safety
// `model` must be a live handle.
double tr_model_loglik(const struct TrModel *model);

// # Safety
// `model` must be a live handle.
double tr_model_bic(const struct TrModel *model);

// # Safety
// `model` must be a live handle.
bool tr_model_converged(const struct TrModel *model);

// Writes the `order` mode sizes into `out`.
//
// # Safety
// `model` must be a live handle and `out` must hold `len` values.
enum TrStatus tr_model_dims(const struct TrModel *model, size_t *out, size_t len);

// Writes factor `B_{mode+1}` (`dims[mode] x rank`, column-major) into `out`.
//
// # Safety
// `model` must be a live handle and `out` must hold `len` values.
enum TrStatus tr_model_factor(const struct TrModel *model, size_t mode, double *out, size_t len);

// Writes the covariate coefficients into `out`.
//
// # Safety
// `model` must be a live handle and `out` must hold `len` values.
enum TrStatus tr_model_gamma(const struct TrModel *model, double *out, size_t len);

// Writes the fitted mean for every sample of `dataset` into `out`.
//
// # Safety
// Handles must be live and `out` must hold `len` values.
enum TrStatus tr_model_predict(const struct TrModel *model,
                               const struct TrDataset *dataset,
                               double *out,
                               size_t len);

// Serializes the model to a JSON string released with [`tr_string_free`].
//
// # Safety
// `model` must be a live handle and `out` writable.
enum TrStatus tr_model_to_json(const struct TrModel *model, char **out);

// Parses a model document.
//
// # Safety
// `json` must be a NUL-terminated string and `out` writable.
enum TrStatus tr_model_from_json(const char *json, struct TrModel **out);

// # Safety
// `s` must be null or a string returned by this library, not yet freed.
void tr_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TENSORREG_H */
