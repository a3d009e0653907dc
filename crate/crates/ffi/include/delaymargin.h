#ifndef DELAYMARGIN_H
#define DELAYMARGIN_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define DM_MODE_STABLE 0

#define DM_MODE_HYPERBOLIC 1

typedef enum DmStatus {
  DM_STATUS_OK = 0,
  DM_STATUS_NULL_POINTER = 1,
  DM_STATUS_INVALID_UTF8 = 2,
  DM_STATUS_INVALID_SPEC = 3,
  DM_STATUS_INVALID_ARGUMENT = 4,
  DM_STATUS_COMPUTATION_FAILED = 5,
  DM_STATUS_PANIC = 6,
} DmStatus;

/**
 * Opaque handle to a validated system.
 */
typedef struct DmSystem DmSystem;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Parses a JSON system spec into a new handle stored in `*out`.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` writable.
 */
enum DmStatus dm_system_from_json(const char *json, struct DmSystem **out);

/**
 * Releases a handle. Null is ignored.
 *
 * # Safety
 * `sys` must come from `dm_system_from_json` and not be used afterwards.
 */
void dm_system_free(struct DmSystem *sys);

/**
 * State dimension `n`.
 *
 * # Safety
 * `sys` must be a live handle and `out` writable.
 */
enum DmStatus dm_system_dim(const struct DmSystem *sys, size_t *out);

/**
 * Largest real part of the characteristic roots.
 *
 * # Safety
 * `sys` must be a live handle and `out` writable.
 */
enum DmStatus dm_spectral_abscissa(const struct DmSystem *sys, double *out);

/**
 * Root set as JSON.
 *
 * # Safety
 * `sys` must be a live handle and `out` writable.
 */
enum DmStatus dm_roots_json(const struct DmSystem *sys, char **out);

/**
 * Smallest singular value of `Δ(re + i·im)` in `*sigma_min` and resolvent-set membership in `*in_resolvent`.
 *
 * # Safety
 * `sys` must be a live handle; output pointers writable.
 */
enum DmStatus dm_char_matrix_sigma_min(const struct DmSystem *sys,
                                       double re,
                                       double im,
                                       double *sigma_min,
                                       bool *in_resolvent);

/**
 * Hyperbolicity report as JSON.
 *
 * # Safety
 * `sys` must be a live handle and `out` writable.
 */
enum DmStatus dm_hyperbolicity_test_json(const struct DmSystem *sys, char **out);

/**
 * Stability report at decay rate `alpha` as JSON.
 *
 * # Safety
 * `sys` must be a live handle and `out` writable.
 */
enum DmStatus dm_stability_test_json(const struct DmSystem *sys, double alpha, char **out);

/**
 * Small-delay margin of a feedback system as JSON; `mode` is
 * `DM_MODE_STABLE` or `DM_MODE_HYPERBOLIC`.
 *
 * # Safety
 * `sys` must be a live handle and `out` writable.
 */
enum DmStatus dm_robustness_margin_json(const struct DmSystem *sys, int32_t mode, char **out);

/**
 * First delay in `[lo, hi]` where the feedback system's rightmost root crosses `iℝ`.
 *
 * # Safety
 * `sys` must be a live handle and `out` writable.
 */
enum DmStatus dm_critical_delay(const struct DmSystem *sys, double lo, double hi, double *out);

/**
 * Message for the last failed call on this thread, or null. Valid until the next failing call.
 */
const char *dm_last_error_message(void);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from one of the `*_json` functions and not be used afterwards.
 */
void dm_string_free(char *s);

/**
 * Library version, a static NUL-terminated string.
 */
const char *dm_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DELAYMARGIN_H */
