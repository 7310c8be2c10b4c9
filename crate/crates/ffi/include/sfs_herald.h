#ifndef SFS_HERALD_H
#define SFS_HERALD_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SfsStatus {
  SFS_STATUS_OK = 0,
  SFS_STATUS_NULL_POINTER = 1,
  SFS_STATUS_INVALID_ARGUMENT = 2,
  SFS_STATUS_BUFFER_TOO_SMALL = 3,
  SFS_STATUS_COMPUTATION = 4,
  SFS_STATUS_PANIC = 5,
} SfsStatus;

/**
 * Opaque universal scheme: free parameters, target squeezing and the
 * beam-splitter decomposition.
 */
typedef struct SfsScheme SfsScheme;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. The pointer is
 * valid until the next failing call on the same thread.
 */
const char *sfs_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *sfs_version(void);

/**
 * Creates a scheme from `a_len = n_modes − 1` free parameters.
 *
 * # Safety
 * `a` must point to `a_len` readable doubles and `out` must be writable.
 */
enum SfsStatus sfs_scheme_new(size_t n_modes,
                              const double *a,
                              size_t a_len,
                              double r,
                              struct SfsScheme **out);

/**
 * Creates the scheme with `X = 2n + 1` and equal free parameters.
 *
 * # Safety
 * `out` must be writable.
 */
enum SfsStatus sfs_scheme_new_optimal(size_t n_modes, size_t n, double r, struct SfsScheme **out);

/**
 * Releases a scheme. NULL is ignored.
 *
 * # Safety
 * `s` must come from a constructor above and not have been freed.
 */
void sfs_scheme_free(struct SfsScheme *s);

/**
 * Number of modes, or 0 for NULL.
 *
 * # Safety
 * `s` must be NULL or a live scheme.
 */
size_t sfs_scheme_n_modes(const struct SfsScheme *s);

/**
 * # Safety
 * `s` must be a live scheme and `out` writable.
 */
enum SfsStatus sfs_scheme_universal_parameter(const struct SfsScheme *s, double *out);

/**
 * Row-major σ, `n_modes²` values.
 *
 * # Safety
 * `s` must be a live scheme and `out` must hold `len` doubles.
 */
enum SfsStatus sfs_scheme_sigma(const struct SfsScheme *s, double *out, size_t len);

/**
 * Input squeezings `r_1 … r_N`.
 *
 * # Safety
 * `s` must be a live scheme and `out` must hold `len` doubles.
 */
enum SfsStatus sfs_scheme_squeezings(const struct SfsScheme *s, double *out, size_t len);

/**
 * Beam-splitter transmittances in application order, `n_modes − 1` values.
 *
 * # Safety
 * `s` must be a live scheme and `out` must hold `len` doubles.
 */
enum SfsStatus sfs_scheme_transmittances(const struct SfsScheme *s, double *out, size_t len);

/**
 * Probability of the detector counts `counts[0..len]`.
 *
 * # Safety
 * `s` must be a live scheme, `counts` must hold `len` values and `out` be
 * writable.
 */
enum SfsStatus sfs_scheme_pattern_probability(const struct SfsScheme *s,
                                              const size_t *counts,
                                              size_t len,
                                              double *out);

/**
 * Fidelity of the order-`n` output with detectors of efficiency `eta`.
 *
 * # Safety
 * `s` must be a live scheme and `out` writable.
 */
enum SfsStatus sfs_scheme_lossy_fidelity(const struct SfsScheme *s,
                                         size_t n,
                                         double eta,
                                         double *out);

/**
 * `2 (X−1)^n / (X+1)^{n+1}`.
 *
 * # Safety
 * `out` must be writable.
 */
enum SfsStatus sfs_total_probability(double x, size_t n, double *out);

/**
 * # Safety
 * `out` must be writable.
 */
enum SfsStatus sfs_lossy_fidelity(double x, size_t n, double eta, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SFS_HERALD_H */
