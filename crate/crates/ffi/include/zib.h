#ifndef ZIB_H
#define ZIB_H

#include <stddef.h>
#include <stdint.h>

// Result codes. Zero is success.
typedef enum ZibStatus {
  ZIB_STATUS_OK = 0,
  ZIB_STATUS_NULL_POINTER = 1,
  ZIB_STATUS_INVALID_ARGUMENT = 2,
  ZIB_STATUS_DIMENSION_MISMATCH = 3,
  ZIB_STATUS_RANK_DEFICIENT = 4,
  ZIB_STATUS_NOT_CONVERGED = 5,
  ZIB_STATUS_NUMERICAL = 6,
  ZIB_STATUS_IO = 7,
  ZIB_STATUS_PARSE = 8,
  ZIB_STATUS_PANIC = 9,
} ZibStatus;

typedef enum ZibLink {
  ZIB_LINK_PROBIT = 0,
  ZIB_LINK_LOGIT = 1,
} ZibLink;

// Opaque dataset handle.
typedef struct ZibDataset ZibDataset;

// Opaque fit handle.
typedef struct ZibFit ZibFit;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Builds a dataset from row-major covariate arrays.
//
// `x` holds `rows * p` values and `w` holds `rows * q`; the first column of
// each must be the intercept (all ones).
//
// # Safety
// Arrays must be valid for the stated lengths; `out` must be writable.
enum ZibStatus zib_dataset_new(size_t rows,
                               const uint64_t *y,
                               const uint64_t *n_trials,
                               const double *x,
                               size_t p,
                               const double *w,
                               size_t q,
                               struct ZibDataset **out);

// Reads a CSV file using a schema given as a JSON string.
//
// # Safety
// `path` and `schema_json` must be NUL-terminated strings; `out` must be writable.
enum ZibStatus zib_dataset_from_csv(const char *path,
                                    const char *schema_json,
                                    struct ZibDataset **out);

// Writes the row count and covariate dimensions of a dataset.
//
// # Safety
// `data` must be a live handle; each output pointer may be null.
enum ZibStatus zib_dataset_dim(const struct ZibDataset *data, size_t *rows, size_t *p, size_t *q);

// # Safety
// `data` must be null or a handle from this library not yet freed.
void zib_dataset_free(struct ZibDataset *data);

// Fits the model. A fit that runs but does not converge still yields a
// handle and returns `NotConverged`; standard errors are then unavailable.
//
// `binomial_only` nonzero fits the count part alone, ignoring `link_zero`.
//
// # Safety
// `data` must be a live handle; `out` must be writable.
enum ZibStatus zib_fit(const struct ZibDataset *data,
                       enum ZibLink link_zero,
                       enum ZibLink link_count,
                       int binomial_only,
                       struct ZibFit **out);

// # Safety
// `fit` must be null or a handle from this library not yet freed.
void zib_fit_free(struct ZibFit *fit);

// Number of estimated coefficients (zero part first, then count part).
//
// # Safety
// `fit` must be a live handle or null (returns 0).
size_t zib_fit_dim(const struct ZibFit *fit);

// # Safety
// `fit` must be a live handle; `out` must hold `zib_fit_dim(fit)` values.
enum ZibStatus zib_fit_estimates(const struct ZibFit *fit, double *out);

// # Safety
// `fit` must be a live handle; `out` must hold `zib_fit_dim(fit)` values.
enum ZibStatus zib_fit_std_errors(const struct ZibFit *fit, double *out);

// # Safety
// `fit` must be a live handle or null (returns NaN).
double zib_fit_loglik(const struct ZibFit *fit);

// # Safety
// `fit` must be a live handle or null (returns 0).
int zib_fit_converged(const struct ZibFit *fit);

// # Safety
// `fit` must be a live handle or null (returns 0).
size_t zib_fit_iterations(const struct ZibFit *fit);

// The JSON fit report. Release with [`zib_string_free`].
//
// # Safety
// `fit` must be a live handle or null (returns null).
char *zib_fit_to_json(const struct ZibFit *fit);

// # Safety
// `s` must be null or a string returned by this library not yet freed.
void zib_string_free(char *s);

// Log-likelihood at a stacked parameter `theta` of length `p + q`.
//
// # Safety
// `data` must be a live handle, `theta` valid for `len` reads, `out` writable.
enum ZibStatus zib_log_likelihood(const struct ZibDataset *data,
                                  enum ZibLink link_zero,
                                  enum ZibLink link_count,
                                  const double *theta,
                                  size_t len,
                                  double *out);

// Score vector at `theta`, written to `out` (length `len`).
//
// # Safety
// `data` must be a live handle; `theta` and `out` valid for `len` elements.
enum ZibStatus zib_score(const struct ZibDataset *data,
                         enum ZibLink link_zero,
                         enum ZibLink link_count,
                         const double *theta,
                         size_t len,
                         double *out);

// Message for the last failed call on this thread, or null. The pointer
// stays valid until the next call into this library on the same thread.
const char *zib_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *zib_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ZIB_H */
