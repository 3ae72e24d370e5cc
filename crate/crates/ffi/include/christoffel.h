#ifndef CHRISTOFFEL_H
#define CHRISTOFFEL_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum ChristoffelStatus {
  CHRISTOFFEL_STATUS_OK = 0,
  CHRISTOFFEL_STATUS_NULL_POINTER = 1,
  CHRISTOFFEL_STATUS_INVALID_ARGUMENT = 2,
  CHRISTOFFEL_STATUS_DIMENSION_MISMATCH = 3,
  CHRISTOFFEL_STATUS_NUMERIC = 4,
  CHRISTOFFEL_STATUS_CAPACITY = 5,
  CHRISTOFFEL_STATUS_IO = 6,
  CHRISTOFFEL_STATUS_PARSE = 7,
  CHRISTOFFEL_STATUS_PANIC = 8,
} ChristoffelStatus;

// Opaque handle to a support estimate.
typedef struct ChristoffelEstimate ChristoffelEstimate;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or NULL. The pointer is
// valid until the next failing call on the same thread.
const char *christoffel_last_error(void);

// Static description of a status code.
const char *christoffel_status_string(enum ChristoffelStatus status);

// Classical sample size for accuracy `epsilon`, confidence `delta`, sample
// dimension `n` and degree `m`. Writes the sample size and the VC
// dimension `C(n+2m, n)`.
//
// # Safety
// `out_samples` must be writable; `out_vc_dim` may be NULL.
enum ChristoffelStatus christoffel_sample_bound(double epsilon,
                                                double delta,
                                                size_t n,
                                                size_t m,
                                                uint64_t *out_samples,
                                                uint64_t *out_vc_dim);

// Fits the polynomial estimator of degree `m` to `n_points` row-major
// points of dimension `dim`, with the threshold at the largest training
// value, so every training point is inside.
//
// # Safety
// `points` must hold `n_points * dim` doubles; `out` must be writable.
enum ChristoffelStatus christoffel_fit_poly(const double *points,
                                            size_t n_points,
                                            size_t dim,
                                            size_t m,
                                            double sigma0_sq,
                                            struct ChristoffelEstimate **out);

// Loads an estimate written by the `christoffel` tool.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum ChristoffelStatus christoffel_estimate_load(const char *path,
                                                 struct ChristoffelEstimate **out);

// Parses an estimate from its JSON text.
//
// # Safety
// `json` must be a NUL-terminated string; `out` must be writable.
enum ChristoffelStatus christoffel_estimate_from_json(const char *json,
                                                      struct ChristoffelEstimate **out);

// Serializes an estimate. The returned string must be released with
// [`christoffel_string_free`].
//
// # Safety
// `estimate` must be a live handle; `out` must be writable.
enum ChristoffelStatus christoffel_estimate_to_json(const struct ChristoffelEstimate *estimate,
                                                    char **out);

// # Safety
// `s` must come from [`christoffel_estimate_to_json`] and not be freed
// twice. NULL is ignored.
void christoffel_string_free(char *s);

// # Safety
// `estimate` must be NULL or a handle not yet freed.
void christoffel_estimate_free(struct ChristoffelEstimate *estimate);

// # Safety
// `estimate` must be a live handle; outputs must be writable.
enum ChristoffelStatus christoffel_estimate_info(const struct ChristoffelEstimate *estimate,
                                                 size_t *out_dim,
                                                 double *out_threshold);

// Inverse Christoffel values at `n_points` row-major points.
//
// # Safety
// `points` must hold `n_points * dim` doubles and `out_values` room for
// `n_points`.
enum ChristoffelStatus christoffel_estimate_eval(const struct ChristoffelEstimate *estimate,
                                                 const double *points,
                                                 size_t n_points,
                                                 size_t dim,
                                                 double *out_values);

// Membership (1 inside, 0 outside) of `n_points` row-major points.
//
// # Safety
// `points` must hold `n_points * dim` doubles and `out_members` room for
// `n_points` bytes.
enum ChristoffelStatus christoffel_estimate_contains(const struct ChristoffelEstimate *estimate,
                                                     const double *points,
                                                     size_t n_points,
                                                     size_t dim,
                                                     uint8_t *out_members);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CHRISTOFFEL_H */
