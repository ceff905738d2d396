#ifndef CAPSYS_H
#define CAPSYS_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result code of every fallible call.
 */
typedef enum CapsysStatus {
  CAPSYS_STATUS_OK = 0,
  CAPSYS_STATUS_NULL_POINTER = 1,
  CAPSYS_STATUS_INVALID_ARGUMENT = 2,
  CAPSYS_STATUS_INVALID_BODY = 3,
  CAPSYS_STATUS_PARSE = 4,
  CAPSYS_STATUS_NUMERICAL = 5,
  CAPSYS_STATUS_BUFFER_TOO_SMALL = 6,
  CAPSYS_STATUS_PANIC = 7,
} CapsysStatus;

/*
 Index bound hypothesis for [`capsys_index_bound`].
 */
typedef enum CapsysIndexFlavor {
  CAPSYS_INDEX_FLAVOR_GENERAL = 0,
  CAPSYS_INDEX_FLAVOR_CENTRALLY_SYMMETRIC = 1,
  CAPSYS_INDEX_FLAVOR_S1_INVARIANT = 2,
} CapsysIndexFlavor;

/*
 Opaque convex body.
 */
typedef struct CapsysBody CapsysBody;

/*
 Opaque reconstructed systole.
 */
typedef struct CapsysSystole CapsysSystole;

/*
 Solver settings exposed to C; the remaining knobs keep their defaults.
 */
typedef struct CapsysSolveConfig {
  /*
   Truncation order N.
   */
  size_t modes;
  /*
   Quadrature samples M; 0 means 8N.
   */
  size_t grid;
  size_t starts;
  uint64_t seed;
  /*
   Relative accuracy claimed for numeric values.
   */
  double accuracy;
} CapsysSolveConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failed call on this thread, or null. The pointer
 stays valid until the next call into this library on the same thread.
 */
const char *capsys_last_error(void);

/*
 Library version as a static nul-terminated string.
 */
const char *capsys_version(void);

/*
 Default solver settings.
 */
struct CapsysSolveConfig capsys_solve_config_default(void);

/*
 Builds a body from a JSON body specification.

 # Safety
 `json` must be a nul-terminated string and `out` a valid pointer.
 */
enum CapsysStatus capsys_body_from_json(const char *json, struct CapsysBody **out);

/*
 Builds the ellipsoid `E(a_1, ..., a_n)` in `R^2n`.

 # Safety
 `a` must point to `n` doubles and `out` must be valid.
 */
enum CapsysStatus capsys_body_ellipsoid(const double *a, size_t n, struct CapsysBody **out);

/*
 Releases a body; null is ignored.

 # Safety
 `body` must come from this library and not be used afterwards.
 */
void capsys_body_free(struct CapsysBody *body);

/*
 Ambient dimension `2n`.

 # Safety
 Pointers must be valid.
 */
enum CapsysStatus capsys_body_dim(const struct CapsysBody *body, size_t *out);

/*
 Support function `h_K(u)`.

 # Safety
 `u` must point to `len` doubles; other pointers must be valid.
 */
enum CapsysStatus capsys_body_support(const struct CapsysBody *body,
                                      const double *u,
                                      size_t len,
                                      double *out);

/*
 Numeric first capacity: the best dual value over all starts.

 # Safety
 Pointers must be valid.
 */
enum CapsysStatus capsys_c1_numeric(const struct CapsysBody *body,
                                    const struct CapsysSolveConfig *config,
                                    double *out);

/*
 Minimizes and reconstructs the best systole.

 # Safety
 Pointers must be valid.
 */
enum CapsysStatus capsys_systole_solve(const struct CapsysBody *body,
                                       const struct CapsysSolveConfig *config,
                                       struct CapsysSystole **out);

/*
 Releases a systole; null is ignored.

 # Safety
 `systole` must come from this library and not be used afterwards.
 */
void capsys_systole_free(struct CapsysSystole *systole);

/*
 Action, inclusion residual and boundary residual of a systole. Any output
 pointer may be null.

 # Safety
 `systole` must be valid; non-null outputs must be writable.
 */
enum CapsysStatus capsys_systole_summary(const struct CapsysSystole *systole,
                                         double *action,
                                         double *inclusion_residual,
                                         double *boundary_residual);

/*
 Copies the loop samples, row-major `samples x dim` in block coordinates
 `(x_1..x_n, y_1..y_n)`. With `buf` null only the sizes are written.

 # Safety
 `buf` must hold `buf_len` doubles when non-null; other pointers valid.
 */
enum CapsysStatus capsys_systole_samples(const struct CapsysSystole *systole,
                                         double *buf,
                                         size_t buf_len,
                                         size_t *samples,
                                         size_t *dim);

/*
 First `m` Gutt-Hutchings capacities of `E(a_1, ..., a_n)`.

 # Safety
 `a` must hold `n` doubles and `out` must hold `m` doubles.
 */
enum CapsysStatus capsys_ellipsoid_capacities(const double *a, size_t n, size_t m, double *out);

/*
 Systolic S1-index and generalized Zoll flag of `E(a_1, ..., a_n)`.

 # Safety
 `a` must hold `n` doubles; outputs must be valid.
 */
enum CapsysStatus capsys_ellipsoid_index(const double *a, size_t n, size_t *index, bool *zoll);

/*
 Upper bound for the systolic S1-index in dimension `2n`.
 */
size_t capsys_index_bound(size_t n, enum CapsysIndexFlavor flavor);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CAPSYS_H */
