#ifndef CRUX_H
#define CRUX_H

/* Generated by cbindgen from crates/crux-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes for every fallible entry point.
typedef enum CruxStatus {
  CRUX_STATUS_OK = 0,
  // A required pointer argument was null.
  CRUX_STATUS_NULL_ARGUMENT = 1,
  // Arguments violated a precondition (sizes, ranges, classes).
  CRUX_STATUS_INVALID_ARGUMENT = 2,
  // A file or JSON payload failed to parse.
  CRUX_STATUS_PARSE_ERROR = 3,
  // Filesystem failure.
  CRUX_STATUS_IO_ERROR = 4,
} CruxStatus;

// Opaque trained fusion head.
typedef struct CruxFusion CruxFusion;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static C string.
const char *crux_version(void);

// Message for the most recent failure on this thread. Never null; empty
// until a failure occurs. The pointer is valid until the next failing call
// on the same thread.
const char *crux_last_error_message(void);

// Shannon entropy (nats) of a cluster probability distribution.
//
// # Safety
// `probs` must point to `len` readable doubles and `out` to a writable
// double.
enum CruxStatus crux_entropy(const double *probs, size_t len, double *out);

// Entropy reduction H(context-free) - H(with-context) between two cluster
// distributions, in nats.
//
// # Safety
// Both probability arrays must be readable for their stated lengths and
// `out` writable.
enum CruxStatus crux_entropy_reduction(const double *context_free,
                                       size_t context_free_len,
                                       const double *with_context,
                                       size_t with_context_len,
                                       double *out);

// Pairwise unified consistency over a pooled `m x m` similarity matrix
// (`m = 2n`). Value lies in [-1, 0].
//
// # Safety
// `w` must point to `m*m` readable doubles and `out` to a writable double.
enum CruxStatus crux_gc_pairwise(const double *w, size_t m, double *out);

// Center (medoid) unified consistency over an `m x m` similarity matrix.
//
// # Safety
// `w` must point to `m*m` readable doubles and `out` to a writable double.
enum CruxStatus crux_gc_center(const double *w, size_t m, double *out);

// Ascending eigenvalues of the normalized graph Laplacian of `w`, written
// to `out` (length `m`).
//
// # Safety
// `w` must point to `m*m` readable doubles and `out` to `m` writable
// doubles.
enum CruxStatus crux_laplacian_eigenvalues(const double *w, size_t m, double *out);

// AUROC of `scores` against binary `labels` (0/1), via the exact
// Mann-Whitney estimator. Requires both classes present.
//
// # Safety
// `scores` must point to `len` readable doubles, `labels` to `len` readable
// bytes, and `out` to a writable double.
enum CruxStatus crux_auroc(const double *scores, const uint8_t *labels, size_t len, double *out);

// Canonical answer normalization (lowercase, whitespace collapse, trailing
// sentence punctuation stripped). Returns a newly allocated C string, or
// null on invalid UTF-8 / null input. Free with [`crux_string_free`].
//
// # Safety
// `raw` must be a valid NUL-terminated C string or null.
char *crux_normalize_answer(const char *raw);

// Frees a string allocated by this library.
//
// # Safety
// `s` must be null or a pointer previously returned by
// [`crux_normalize_answer`] that has not been freed.
void crux_string_free(char *s);

// Loads fusion parameters from their JSON file. Returns null on failure
// (see [`crux_last_error_message`]).
//
// # Safety
// `path` must be a valid NUL-terminated C string.
struct CruxFusion *crux_fusion_load_file(const char *path);

// Parses fusion parameters from a JSON string. Returns null on failure.
//
// # Safety
// `json` must be a valid NUL-terminated C string.
struct CruxFusion *crux_fusion_from_json(const char *json);

// Number of input features the head expects (1 or 2); 0 for null handles.
//
// # Safety
// `fusion` must be null or a live handle from a `crux_fusion_*` constructor.
size_t crux_fusion_feature_count(const struct CruxFusion *fusion);

// Runs the fusion head on a feature vector, writing a confidence in (0, 1).
//
// # Safety
// `fusion` must be a live handle, `features` readable for `len` doubles,
// and `out` writable.
enum CruxStatus crux_fusion_forward(const struct CruxFusion *fusion,
                                    const double *features,
                                    size_t len,
                                    double *out);

// Frees a fusion handle.
//
// # Safety
// `fusion` must be null or a live handle that has not been freed.
void crux_fusion_free(struct CruxFusion *fusion);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CRUX_H */
