#ifndef SLOWFAST_NSE_H
#define SLOWFAST_NSE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum NseStatus {
  NSE_STATUS_OK = 0,
  NSE_STATUS_NULL_POINTER = 1,
  NSE_STATUS_INVALID_ARGUMENT = 2,
  NSE_STATUS_CONFIG_PARSE = 3,
  NSE_STATUS_INADMISSIBLE = 4,
  NSE_STATUS_IO = 5,
  NSE_STATUS_RUNTIME = 6,
  NSE_STATUS_PANIC = 7,
} NseStatus;

/**
 * `Sobolev`: `‖u‖_s = |(-A)^{s/2} u|`. `Lebesgue`: `L^p` norm on the
 * physical grid.
 */
typedef enum NseNormKind {
  NSE_NORM_KIND_SOBOLEV = 0,
  NSE_NORM_KIND_LEBESGUE = 1,
} NseNormKind;

/**
 * Parsed experiment config.
 */
typedef struct NseConfig NseConfig;

/**
 * Divergence-free, Hermitian spectral field.
 */
typedef struct NseField NseField;

/**
 * Truncated Fourier space for an `N × N` grid.
 */
typedef struct NseSpace NseSpace;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failing call on this thread (empty if none). The
 * pointer stays valid until the next failing call on the same thread.
 */
const char *nse_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *nse_version(void);

/**
 * # Safety
 * `out` must be a valid pointer to writable storage.
 */
enum NseStatus nse_space_new(size_t n, struct NseSpace **out);

/**
 * # Safety
 * `space` must come from `nse_space_new` (or be null) and not be used after.
 */
void nse_space_free(struct NseSpace *space);

/**
 * Number of retained wavenumbers in the space.
 *
 * # Safety
 * `space` and `out` must be valid.
 */
enum NseStatus nse_space_retained(const struct NseSpace *space, size_t *out);

/**
 * # Safety
 * `space` and `out` must be valid.
 */
enum NseStatus nse_field_zeros(const struct NseSpace *space, struct NseField **out);

/**
 * Random field with `|k|^{-decay}` coefficient decay, normalised to
 * `|u| = norm` (unnormalised when `norm <= 0`).
 *
 * # Safety
 * `space` and `out` must be valid.
 */
enum NseStatus nse_field_random(const struct NseSpace *space,
                                uint64_t seed,
                                double decay,
                                double target_norm,
                                struct NseField **out);

/**
 * Taylor–Green vortex scaled by `amplitude`.
 *
 * # Safety
 * `space` and `out` must be valid.
 */
enum NseStatus nse_field_taylor_green(const struct NseSpace *space,
                                      double amplitude,
                                      struct NseField **out);

/**
 * # Safety
 * `field` must come from this library (or be null) and not be used after.
 */
void nse_field_free(struct NseField *field);

/**
 * Coefficient `û(k)` as `[re₁, im₁, re₂, im₂]`; `InvalidArgument` for a
 * wavenumber outside the grid.
 *
 * # Safety
 * `field` must be valid and `out` must point to 4 writable doubles.
 */
enum NseStatus nse_field_coefficient(const struct NseField *field,
                                     int64_t k1,
                                     int64_t k2,
                                     double *out);

/**
 * `‖u‖_s` (`kind = Sobolev`, `param = s`) or `|u|_{L^p}` (`kind = Lebesgue`,
 * `param = p`).
 *
 * # Safety
 * `field` and `out` must be valid.
 */
enum NseStatus nse_field_norm(const struct NseField *field,
                              enum NseNormKind kind,
                              double param,
                              double *out);

/**
 * Largest `|k·û(k)|` over retained modes.
 *
 * # Safety
 * `field` and `out` must be valid.
 */
enum NseStatus nse_field_divergence(const struct NseField *field, double *out);

/**
 * Leray projection of an existing field (idempotent on valid fields).
 *
 * # Safety
 * `field` and `out` must be valid.
 */
enum NseStatus nse_field_project(const struct NseField *field, struct NseField **out);

/**
 * `B(u, v)`.
 *
 * # Safety
 * `u`, `v` and `out` must be valid.
 */
enum NseStatus nse_field_nonlinear(const struct NseField *u,
                                   const struct NseField *v,
                                   struct NseField **out);

/**
 * `b(u, v, w)`.
 *
 * # Safety
 * `u`, `v`, `w` and `out` must be valid.
 */
enum NseStatus nse_field_trilinear(const struct NseField *u,
                                   const struct NseField *v,
                                   const struct NseField *w,
                                   double *out);

/**
 * Writes `count` fields to an NSEF snapshot at `path`.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `fields` an array of `count`
 * valid field pointers.
 */
enum NseStatus nse_snapshot_write(const char *path,
                                  const struct NseField *const *fields,
                                  size_t count);

/**
 * Reads an NSEF snapshot into `out[0..capacity]`; `*count` receives the
 * number of fields in the file. Fails with `InvalidArgument` when the file
 * holds more than `capacity` fields or its N differs from `space`.
 *
 * # Safety
 * `path` must be NUL-terminated, `space` valid, `out` an array of
 * `capacity` writable pointers and `count` writable.
 */
enum NseStatus nse_snapshot_read(const char *path,
                                 const struct NseSpace *space,
                                 struct NseField **out,
                                 size_t capacity,
                                 size_t *count);

/**
 * Parses a JSON experiment config.
 *
 * # Safety
 * `json` must be NUL-terminated and `out` writable.
 */
enum NseStatus nse_config_from_json(const char *json, struct NseConfig **out);

/**
 * # Safety
 * `config` must come from `nse_config_from_json` (or be null).
 */
void nse_config_free(struct NseConfig *config);

/**
 * Dissipativity margin `2λ₁ - 2L_g - L_{σ₂}²` of the configured set. Does
 * not fail on a non-positive margin.
 *
 * # Safety
 * `config` and `out` must be valid.
 */
enum NseStatus nse_config_margin(const struct NseConfig *config, double *out);

/**
 * Runs the convergence study and returns its report as a JSON string,
 * released with `nse_string_free`.
 *
 * # Safety
 * `config` and `out` must be valid.
 */
enum NseStatus nse_run_convergence(const struct NseConfig *config, char **out);

/**
 * # Safety
 * `s` must come from this library (or be null).
 */
void nse_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SLOWFAST_NSE_H */
