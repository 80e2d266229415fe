#ifndef LEAFCALC_H
#define LEAFCALC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes shared by every call.
 */
typedef enum LcStatus {
  LC_STATUS_OK = 0,
  LC_STATUS_NULL_POINTER = 1,
  LC_STATUS_INVALID_UTF8 = 2,
  LC_STATUS_PARSE = 3,
  LC_STATUS_INPUT = 4,
  LC_STATUS_DIMENSION = 5,
  LC_STATUS_RING = 6,
  LC_STATUS_ELLIPTICITY = 7,
  LC_STATUS_POSITIVITY = 8,
  LC_STATUS_NOT_SELF_ADJOINT = 9,
  LC_STATUS_DENSE_CAP = 10,
  LC_STATUS_ALIASING = 11,
  LC_STATUS_ESCAPE = 12,
  LC_STATUS_CONFIG = 13,
  LC_STATUS_IO = 14,
  LC_STATUS_STAGE = 15,
  LC_STATUS_PANIC = 16,
} LcStatus;

/**
 * A foliation given by generating vector fields.
 */
typedef struct LcFoliation LcFoliation;

/**
 * A periodic grid.
 */
typedef struct LcGrid LcGrid;

/**
 * A dense operator on a grid.
 */
typedef struct LcOperator LcOperator;

/**
 * A symbol `a(x, xi)`.
 */
typedef struct LcSymbol LcSymbol;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. The pointer is
 * valid until the next call on the same thread.
 */
const char *lc_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *lc_version(void);

/**
 * Releases a string returned by this library.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void lc_string_free(char *s);

/**
 * Polyhomogeneous symbol from `n_terms` homogeneous terms of degrees
 * `order, order - 1, ...`.
 *
 * # Safety
 * `terms` must point to `n_terms` NUL-terminated strings; `out` must be writable.
 */
enum LcStatus lc_symbol_parse(int32_t order,
                              const char *const *terms,
                              size_t n_terms,
                              size_t dim,
                              struct LcSymbol **out);

/**
 * Symbol given by a closed form together with its principal part.
 *
 * # Safety
 * `expr` and `principal` must be NUL-terminated; `out` must be writable.
 */
enum LcStatus lc_symbol_closed_form(int32_t order,
                                    const char *expr,
                                    const char *principal,
                                    size_t dim,
                                    struct LcSymbol **out);

/**
 * `a(x, xi)` for `x`, `xi` of the symbol's dimension.
 *
 * # Safety
 * `x` and `xi` must hold `dim` doubles; `re` and `im` must be writable.
 */
enum LcStatus lc_symbol_eval(const struct LcSymbol *symbol,
                             const double *x,
                             const double *xi,
                             size_t dim,
                             double *re,
                             double *im);

/**
 * # Safety
 * `symbol` must come from this library and not have been freed.
 */
void lc_symbol_free(struct LcSymbol *symbol);

/**
 * Grid of `points^dim` nodes starting at `origin` on every axis.
 *
 * # Safety
 * `out` must be writable.
 */
enum LcStatus lc_grid_new(size_t dim, size_t points, double origin, struct LcGrid **out);

/**
 * Number of grid nodes, or 0 for NULL.
 *
 * # Safety
 * `grid` must be NULL or a live handle.
 */
size_t lc_grid_len(const struct LcGrid *grid);

/**
 * # Safety
 * `grid` must come from this library and not have been freed.
 */
void lc_grid_free(struct LcGrid *grid);

/**
 * Dense `Op(a)` on a grid.
 *
 * # Safety
 * Handles must be live; `out` must be writable.
 */
enum LcStatus lc_operator_quantize(const struct LcSymbol *symbol,
                                   const struct LcGrid *grid,
                                   struct LcOperator **out);

/**
 * Applies an operator to `len` complex values given as separate real and
 * imaginary arrays.
 *
 * # Safety
 * Input arrays must hold `len` doubles and output arrays must be writable
 * for `len` doubles; `im_in` may be NULL for real input.
 */
enum LcStatus lc_operator_apply(const struct LcOperator *op,
                                const double *re_in,
                                const double *im_in,
                                double *re_out,
                                double *im_out,
                                size_t len);

/**
 * `a b` as a new operator.
 *
 * # Safety
 * Handles must be live; `out` must be writable.
 */
enum LcStatus lc_operator_compose(const struct LcOperator *a,
                                  const struct LcOperator *b,
                                  struct LcOperator **out);

/**
 * Grid adjoint as a new operator.
 *
 * # Safety
 * `op` must be live; `out` must be writable.
 */
enum LcStatus lc_operator_adjoint(const struct LcOperator *op, struct LcOperator **out);

/**
 * Largest entry of `|A - A^*|`.
 *
 * # Safety
 * `op` must be live; `out` must be writable.
 */
enum LcStatus lc_operator_hermitian_defect(const struct LcOperator *op, double *out);

/**
 * Order estimate from plane waves `k e_1` for the `n` frequencies in `ks`.
 *
 * # Safety
 * `ks` must hold `n` values; `out` must be writable.
 */
enum LcStatus lc_operator_estimate_order(const struct LcOperator *op,
                                         const int64_t *ks,
                                         size_t n,
                                         double *out);

/**
 * Lowest `count` eigenvalues of a Hermitian operator, ascending; `written`
 * receives how many were stored.
 *
 * # Safety
 * `values` must be writable for `count` doubles; `written` must be writable.
 */
enum LcStatus lc_operator_spectrum(const struct LcOperator *op,
                                   size_t count,
                                   double *values,
                                   size_t *written);

/**
 * # Safety
 * `op` must come from this library and not have been freed.
 */
void lc_operator_free(struct LcOperator *op);

/**
 * Foliation generated by `n_generators` fields with `dim` components each,
 * stored row by row in `components`. With NULL bounds the domain is the
 * torus, otherwise the box `[lower, upper]`.
 *
 * # Safety
 * `components` must hold `n_generators * dim` strings; bounds must be NULL
 * or hold `dim` doubles; `out` must be writable.
 */
enum LcStatus lc_foliation_parse(size_t dim,
                                 const double *lower,
                                 const double *upper,
                                 const char *const *components,
                                 size_t n_generators,
                                 struct LcFoliation **out);

/**
 * `dim F_x` with degree cap `cap`.
 *
 * # Safety
 * `x` must hold the foliation's dimension of doubles; `out` must be writable.
 */
enum LcStatus lc_foliation_fiber_dimension(const struct LcFoliation *f,
                                           const double *x,
                                           uint32_t cap,
                                           size_t *out);

/**
 * Dimension of the leaf through `x`.
 *
 * # Safety
 * `x` must hold the foliation's dimension of doubles; `out` must be writable.
 */
enum LcStatus lc_foliation_leaf_dimension(const struct LcFoliation *f,
                                          const double *x,
                                          size_t *out);

/**
 * `sum_k X_k^* X_k` on a grid; `cutoff` may be NULL on a torus.
 *
 * # Safety
 * Handles must be live; `cutoff` must be NULL or NUL-terminated; `out`
 * must be writable.
 */
enum LcStatus lc_foliation_laplacian(const struct LcFoliation *f,
                                     const struct LcGrid *grid,
                                     const char *cutoff,
                                     struct LcOperator **out);

/**
 * # Safety
 * `f` must come from this library and not have been freed.
 */
void lc_foliation_free(struct LcFoliation *f);

/**
 * Runs a bundled scenario. `passed` receives the overall verdict and
 * `report`, when not NULL, a JSON report to release with `lc_string_free`.
 *
 * # Safety
 * `name` must be NUL-terminated; `passed` must be writable; `report` must
 * be NULL or writable.
 */
enum LcStatus lc_run_bundled(const char *name, bool *passed, char **report);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LEAFCALC_H */
