/* C ABI for the raterlens analytics core. */

#ifndef RATERLENS_H
#define RATERLENS_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes for every fallible entry point.
 */
typedef enum rl_status {
  RL_OK = 0,
  RL_NULL_POINTER = 1,
  RL_INVALID_ARGUMENT = 2,
  /**
   * Metric undefined for this input (e.g. constant ratings, zero vector).
   */
  RL_DEGENERATE_INPUT = 3,
  RL_NO_CONVERGENCE = 4,
  RL_INVALID_UTF8 = 5,
} rl_status;

/**
 * Opaque fitted PCA model.
 */
typedef struct rl_pca rl_pca;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string; do not free.
 */
const char *rl_version(void);

/**
 * Quadratic weighted kappa of two paired score arrays on an inclusive
 * integer scale.
 *
 * # Safety
 * `xs` and `ys` must point to `len` readable `int` values; `out` must be a
 * valid pointer to one `double`.
 */
enum rl_status rl_qwk(const int *xs,
                      const int *ys,
                      uintptr_t len,
                      int min_score,
                      int max_score,
                      double *out);

/**
 * Normalized mutual information of two paired score arrays, in `[0, 1]`.
 *
 * # Safety
 * `xs` and `ys` must point to `len` readable `int` values; `out` must be a
 * valid pointer to one `double`.
 */
enum rl_status rl_nmi(const int *xs, const int *ys, uintptr_t len, double *out);

/**
 * Cosine similarity of two vectors of dimension `dim`, clamped to [-1, 1].
 *
 * # Safety
 * `u` and `v` must point to `dim` readable `double` values; `out` must be
 * a valid pointer to one `double`.
 */
enum rl_status rl_cosine(const double *u, const double *v, uintptr_t dim, double *out);

/**
 * Deterministic feature-hashed embedding of NUL-terminated UTF-8 text.
 * Writes `dim` doubles into `out`.
 *
 * # Safety
 * `text` must be a valid NUL-terminated string; `out` must point to `dim`
 * writable `double` values.
 */
enum rl_status rl_fallback_embed(const char *text, uintptr_t dim, double *out);

/**
 * Run the default preprocessing pipeline over NUL-terminated UTF-8 text.
 * Returns a newly allocated string (free with [`rl_string_free`]) or NULL
 * on invalid input.
 *
 * # Safety
 * `text` must be a valid NUL-terminated string.
 */
char *rl_preprocess(const char *text);

/**
 * Release a string allocated by this library.
 *
 * # Safety
 * `s` must be a pointer previously returned by [`rl_preprocess`], not yet
 * freed, or NULL.
 */
void rl_string_free(char *s);

/**
 * Fit a `k`-component PCA on `n` row-major observations of dimension `d`.
 * Returns NULL on failure and writes the reason to `status` when given.
 *
 * # Safety
 * `data` must point to `n * d` readable `double` values; `status` may be
 * NULL or point to one writable `rl_status`.
 */
struct rl_pca *rl_pca_fit(const double *data,
                          uintptr_t n,
                          uintptr_t d,
                          uintptr_t k,
                          enum rl_status *status);

/**
 * Number of fitted components.
 *
 * # Safety
 * `handle` must be a live pointer from [`rl_pca_fit`] or NULL.
 */
uintptr_t rl_pca_component_count(const struct rl_pca *handle);

/**
 * Eigenvalue of one fitted component (descending order).
 *
 * # Safety
 * `handle` must be a live pointer from [`rl_pca_fit`]; `out` must point to
 * one writable `double`.
 */
enum rl_status rl_pca_eigenvalue(const struct rl_pca *handle, uintptr_t index, double *out);

/**
 * Project `n` row-major observations of dimension `d` onto the fitted
 * components, writing `n * k` doubles into `out`.
 *
 * # Safety
 * `handle` must be a live pointer from [`rl_pca_fit`]; `rows` must point
 * to `n * d` readable doubles and `out` to `n * k` writable doubles.
 */
enum rl_status rl_pca_project(const struct rl_pca *handle,
                              const double *rows,
                              uintptr_t n,
                              uintptr_t d,
                              double *out);

/**
 * Release a PCA handle.
 *
 * # Safety
 * `handle` must be a pointer from [`rl_pca_fit`], not yet freed, or NULL.
 */
void rl_pca_free(struct rl_pca *handle);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RATERLENS_H */
