#ifndef FPHYBRID_H
#define FPHYBRID_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes. Library failures use the same numbers as the CLI exit codes.
 */
typedef enum FphStatus {
  FPH_STATUS_OK = 0,
  /**
   * A Rust panic was caught at the boundary.
   */
  FPH_STATUS_INTERNAL = 1,
  /**
   * Null pointer, non-UTF-8 string or undersized output buffer.
   */
  FPH_STATUS_INVALID_ARGUMENT = 2,
  FPH_STATUS_PARAMETER = 3,
  FPH_STATUS_DIVERGED = 4,
  FPH_STATUS_EMPTY_HISTOGRAM = 5,
  FPH_STATUS_SPEC_MISMATCH = 6,
  FPH_STATUS_DEGENERATE_GRID = 7,
  FPH_STATUS_RANK_DEFICIENT = 8,
  FPH_STATUS_NON_CONVERGENCE = 9,
  FPH_STATUS_EMPTY_DENSITY = 10,
  FPH_STATUS_OVERLAP = 11,
  FPH_STATUS_CONFIG = 12,
  FPH_STATUS_FORMAT = 13,
  FPH_STATUS_NOT_TWO_DIMENSIONAL = 14,
  FPH_STATUS_MEMORY_GUARD = 15,
  FPH_STATUS_IO = 16,
} FphStatus;

/**
 * Opaque grid density handle.
 */
typedef struct FphDensity FphDensity;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or null if none occurred.
 * The pointer stays valid until the next failing call on the same thread.
 */
const char *fph_last_error_message(void);

/**
 * Reads a binary grid file into a new handle stored in `*out`.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum FphStatus fph_density_read(const char *path, struct FphDensity **out);

/**
 * Writes `density` to `path` in the binary grid format (atomically).
 *
 * # Safety
 * `density` must be a live handle and `path` a NUL-terminated string.
 */
enum FphStatus fph_density_write(const struct FphDensity *density, const char *path);

/**
 * Releases a handle. Passing null is a no-op.
 *
 * # Safety
 * `density` must be null or a handle not yet freed.
 */
void fph_density_free(struct FphDensity *density);

/**
 * Spatial dimension of the grid, or 0 for a null handle.
 *
 * # Safety
 * `density` must be null or a live handle.
 */
uintptr_t fph_density_dim(const struct FphDensity *density);

/**
 * Total number of nodes, or 0 for a null handle.
 *
 * # Safety
 * `density` must be null or a live handle.
 */
uintptr_t fph_density_len(const struct FphDensity *density);

/**
 * Grid spacing `r`.
 *
 * # Safety
 * `density` must be a live handle and `out` a valid pointer.
 */
enum FphStatus fph_density_spacing(const struct FphDensity *density, double *out);

/**
 * Probability mass the density was normalized to.
 *
 * # Safety
 * `density` must be a live handle and `out` a valid pointer.
 */
enum FphStatus fph_density_mass(const struct FphDensity *density, double *out);

/**
 * Copies per-axis node counts and lower corner into caller buffers of length `len >= dim`.
 *
 * # Safety
 * `counts` and `lower` must each point to `len` writable elements.
 */
enum FphStatus fph_density_shape(const struct FphDensity *density,
                                 uintptr_t *counts,
                                 double *lower,
                                 uintptr_t len);

/**
 * Borrowed pointer to the `fph_density_len` node values (row-major, last axis fastest),
 * valid while the handle lives. Null for a null handle.
 *
 * # Safety
 * `density` must be null or a live handle.
 */
const double *fph_density_values(const struct FphDensity *density);

/**
 * Runs the full hybrid pipeline for the INI configuration text `config`
 * (fixed domain only) and stores the corrected density in `*out`.
 *
 * # Safety
 * `config` must be a NUL-terminated string and `out` a valid pointer.
 */
enum FphStatus fph_run_hybrid_config(const char *config, struct FphDensity **out);

/**
 * Closed-form double-well stationary density on the half-line `x >= 0`.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum FphStatus fph_double_well_density(double x, double sigma, double *out);

/**
 * Discrete L2 distance `sqrt(r^d * sum (a - b)^2)` between two densities on the same grid.
 *
 * # Safety
 * `a` and `b` must be live handles and `out` a valid pointer.
 */
enum FphStatus fph_l2_error(const struct FphDensity *a, const struct FphDensity *b, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FPHYBRID_H */
