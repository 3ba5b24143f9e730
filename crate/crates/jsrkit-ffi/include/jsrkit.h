#ifndef JSRKIT_H
#define JSRKIT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every API call.
 */
typedef enum JsrStatus {
  /**
   * Success.
   */
  JSR_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  JSR_STATUS_NULL_ARGUMENT = 1,
  /**
   * Input could not be parsed or failed validation.
   */
  JSR_STATUS_BAD_INPUT = 2,
  /**
   * The family has a common invariant subspace; the method does not apply.
   */
  JSR_STATUS_REDUCIBLE = 3,
  /**
   * Iteration or search budget ran out before certification.
   */
  JSR_STATUS_BUDGET = 4,
  /**
   * No certificate was found (for example, unresolved candidate ties).
   */
  JSR_STATUS_NOT_FOUND = 5,
  /**
   * Numerical failure inside the solvers.
   */
  JSR_STATUS_NUMERIC = 6,
  /**
   * An internal invariant was violated; state is unchanged.
   */
  JSR_STATUS_INTERNAL = 7,
} JsrStatus;

typedef struct JsrBody JsrBody;

typedef struct JsrFamily JsrFamily;

typedef struct JsrNorm JsrNorm;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Last error message for the current thread.
 *
 * The pointer stays valid until the next failing call on the same thread.
 * Never null; holds an empty string when no error has occurred.
 *
 * # Safety
 *
 * The returned pointer must not be freed or written through.
 */
const char *jsrkit_last_error_message(void);

/**
 * Release a string returned by this library. Null is ignored.
 *
 * # Safety
 *
 * `s` must be a pointer previously returned through a `char**` out-parameter
 * of this library and not yet freed.
 */
void jsrkit_string_free(char *s);

/**
 * Parse a family from JSON:
 * `{"matrices": [[[...]]], "nonnegative": bool?, "transpose_first": bool?}`.
 *
 * # Safety
 *
 * `json` must be a valid NUL-terminated UTF-8 string; `out` must be a valid
 * pointer. On `Ok` the caller owns the handle and must release it with
 * [`jsrkit_family_free`].
 */
enum JsrStatus jsrkit_family_from_json(const char *json, struct JsrFamily **out);

/**
 * Release a family handle. Null is ignored.
 *
 * # Safety
 *
 * `family` must come from [`jsrkit_family_from_json`] and not be used after
 * this call.
 */
void jsrkit_family_free(struct JsrFamily *family);

/**
 * Matrix dimension of the family.
 *
 * # Safety
 *
 * `family` must be a live handle; `out` must be valid.
 */
enum JsrStatus jsrkit_family_dim(const struct JsrFamily *family, uintptr_t *out);

/**
 * Number of matrices in the family.
 *
 * # Safety
 *
 * `family` must be a live handle; `out` must be valid.
 */
enum JsrStatus jsrkit_family_member_count(const struct JsrFamily *family, uintptr_t *out);

/**
 * Run the certification pipeline and return the invariant body.
 *
 * `max_len` = 0 and `delta` <= 0 select the defaults. Families flagged
 * `nonnegative` go through the monotone variant.
 *
 * # Safety
 *
 * `family` must be a live handle; `out` must be valid. On `Ok` the caller
 * owns the body handle and must release it with [`jsrkit_body_free`].
 */
enum JsrStatus jsrkit_compute_body(const struct JsrFamily *family,
                                   uintptr_t max_len,
                                   double delta,
                                   struct JsrBody **out);

/**
 * Release a body handle. Null is ignored.
 *
 * # Safety
 *
 * `body` must come from [`jsrkit_compute_body`] and not be used after this
 * call.
 */
void jsrkit_body_free(struct JsrBody *body);

/**
 * Certified joint spectral radius attached to the body.
 *
 * # Safety
 *
 * `body` must be a live handle; `out` must be valid.
 */
enum JsrStatus jsrkit_body_nu(const struct JsrBody *body, double *out);

/**
 * Number of generators (vertices or ellipse pairs) of the body.
 *
 * # Safety
 *
 * `body` must be a live handle; `out` must be valid.
 */
enum JsrStatus jsrkit_body_generator_count(const struct JsrBody *body, uintptr_t *out);

/**
 * Ambient dimension of the body.
 *
 * # Safety
 *
 * `body` must be a live handle; `out` must be valid.
 */
enum JsrStatus jsrkit_body_dim(const struct JsrBody *body, uintptr_t *out);

/**
 * Serialize the body to its JSON document.
 *
 * # Safety
 *
 * `body` must be a live handle; `out` must be valid. The returned string is
 * released with [`jsrkit_string_free`].
 */
enum JsrStatus jsrkit_body_to_json(const struct JsrBody *body, char **out);

/**
 * Build an extremal norm for the family.
 *
 * `monotone` selects the nonnegative-orthant construction (also implied by
 * the family's `nonnegative` flag). `max_len` = 0 selects the default.
 *
 * # Safety
 *
 * `family` must be a live handle; `out` must be valid. On `Ok` the caller
 * owns the norm handle and must release it with [`jsrkit_norm_free`].
 */
enum JsrStatus jsrkit_norm_build(const struct JsrFamily *family,
                                 bool monotone,
                                 uintptr_t max_len,
                                 struct JsrNorm **out);

/**
 * Release a norm handle. Null is ignored.
 *
 * # Safety
 *
 * `norm` must come from [`jsrkit_norm_build`] and not be used after this
 * call.
 */
void jsrkit_norm_free(struct JsrNorm *norm);

/**
 * Joint spectral radius certified by the norm.
 *
 * # Safety
 *
 * `norm` must be a live handle; `out` must be valid.
 */
enum JsrStatus jsrkit_norm_rho(const struct JsrNorm *norm, double *out);

/**
 * Evaluate the norm at a point of length `len`.
 *
 * # Safety
 *
 * `norm` must be a live handle, `x` must point to `len` readable doubles,
 * and `out` must be valid.
 */
enum JsrStatus jsrkit_norm_eval(const struct JsrNorm *norm,
                                const double *x,
                                uintptr_t len,
                                double *out);

/**
 * Serialize the norm (functionals, flags, source body) to JSON.
 *
 * # Safety
 *
 * `norm` must be a live handle; `out` must be valid. The returned string is
 * released with [`jsrkit_string_free`].
 */
enum JsrStatus jsrkit_norm_to_json(const struct JsrNorm *norm, char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* JSRKIT_H */
