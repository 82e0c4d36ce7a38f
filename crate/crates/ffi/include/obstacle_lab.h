#ifndef OBSTACLE_LAB_H
#define OBSTACLE_LAB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes returned by every fallible function.
typedef enum OlStatus {
  OL_STATUS_OK = 0,
  OL_STATUS_NULL_POINTER = 1,
  OL_STATUS_INVALID_UTF8 = 2,
  // Malformed JSON, unknown keys or bad grid parameters.
  OL_STATUS_CONFIG = 3,
  // An expression string failed to parse.
  OL_STATUS_PARSE = 4,
  // The problem violates the structural hypotheses.
  OL_STATUS_VALIDATION = 5,
  // Newton iteration did not reach the tolerance.
  OL_STATUS_NO_CONVERGENCE = 6,
  // A point or radius outside the admissible range.
  OL_STATUS_DOMAIN = 7,
  OL_STATUS_BUFFER_TOO_SMALL = 8,
  // Any other failure inside the library.
  OL_STATUS_INTERNAL = 9,
  OL_STATUS_PANIC = 10,
} OlStatus;

// Problem specification on a fixed grid.
typedef struct OlProblem OlProblem;

// Converged (or last) iterate of a solve, tied to its problem.
typedef struct OlSolution OlSolution;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Build a problem from the JSON form of the `problem` section of an
// experiment config on a grid with `cells_per_axis` nodes per lateral axis,
// and check the ellipticity, symmetry and boundary hypotheses.
//
// # Safety
// `json` must be a NUL-terminated string and `out` a valid pointer. On
// success `*out` owns a handle to release with [`ol_problem_free`].
enum OlStatus ol_problem_from_json(const char *json, size_t cells_per_axis, struct OlProblem **out);

// # Safety
// `problem` must be null or a handle from [`ol_problem_from_json`] not yet freed.
void ol_problem_free(struct OlProblem *problem);

// Number of grid nodes of the problem.
//
// # Safety
// `problem` must be null or a live problem handle.
size_t ol_problem_node_count(const struct OlProblem *problem);

// Minimize the discrete energy from the zero field. `tol <= 0` and
// `max_iter == 0` select the defaults.
//
// A solve that stops short of the tolerance still returns its last iterate
// in `*out` together with [`OlStatus::NoConvergence`].
//
// # Safety
// `problem` must be a live problem handle and `out` a valid pointer.
enum OlStatus ol_solve(const struct OlProblem *problem,
                       double tol,
                       size_t max_iter,
                       struct OlSolution **out);

// # Safety
// `solution` must be null or a handle from [`ol_solve`] not yet freed.
void ol_solution_free(struct OlSolution *solution);

// # Safety
// `solution` must be null or a live solution handle.
size_t ol_solution_node_count(const struct OlSolution *solution);

// Copy the nodal values into `buf`, row-major over `(x1, .., xn)` with `xn`
// fastest; `xn` has `(m + 1) / 2` nodes, the other axes `m`.
//
// # Safety
// `solution` must be a live handle and `buf` must point to `len` writable doubles.
enum OlStatus ol_solution_copy_values(const struct OlSolution *solution, double *buf, size_t len);

// Final discrete energy, NaN for a null handle.
//
// # Safety
// `solution` must be null or a live solution handle.
double ol_solution_energy(const struct OlSolution *solution);

// Max-norm residual of the discrete weak form, NaN for a null handle.
//
// # Safety
// `solution` must be null or a live solution handle.
double ol_solution_weak_residual(const struct OlSolution *solution);

// Newton iterations used.
//
// # Safety
// `solution` must be null or a live solution handle.
size_t ol_solution_iterations(const struct OlSolution *solution);

// Multilinear interpolation of the solution at `x[0..dim]`.
//
// # Safety
// `solution` must be a live handle, `x` must point to `dim` doubles and
// `value` to one writable double.
enum OlStatus ol_solution_interpolate(const struct OlSolution *solution,
                                      const double *x,
                                      size_t dim,
                                      double *value);

// Frequency profile of the solution recentred at the slab point
// `x0[0..dim]` (last coordinate 0), as CSV. `rho_max <= 0` selects 0.9 and
// `rungs == 0` the full ladder down to the resolution floor.
//
// # Safety
// `solution` must be a live handle, `x0` must point to `dim` doubles and
// `out` to a writable pointer. The string in `*out` is released with
// [`ol_string_free`].
enum OlStatus ol_frequency_profile_csv(const struct OlSolution *solution,
                                       const double *x0,
                                       size_t dim,
                                       double rho_max,
                                       size_t rungs,
                                       char **out);

// # Safety
// `s` must be null or a string returned by this library, not yet freed.
void ol_string_free(char *s);

// Message of the last failure on this thread, or null. Valid until the
// next call into the library from the same thread; do not free.
const char *ol_last_error_message(void);

// Library version, a static NUL-terminated string.
const char *ol_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* OBSTACLE_LAB_H */
