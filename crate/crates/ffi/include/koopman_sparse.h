#ifndef KOOPMAN_SPARSE_H
#define KOOPMAN_SPARSE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum KsSolveStatus {
  KS_SOLVE_STATUS_OPTIMAL = 0,
  KS_SOLVE_STATUS_MAX_ITER = 1,
  KS_SOLVE_STATUS_INFEASIBLE_DETECTED = 2,
} KsSolveStatus;

// Result codes; the numeric values of 1–4 match the CLI exit codes.
typedef enum KsStatus {
  KS_STATUS_OK = 0,
  KS_STATUS_IO = 1,
  KS_STATUS_INVALID = 2,
  KS_STATUS_OVERFLOW = 3,
  KS_STATUS_NUMERICAL = 4,
  KS_STATUS_NULL_POINTER = 5,
  KS_STATUS_PANIC = 6,
} KsStatus;

typedef struct KsMomentProblem KsMomentProblem;

typedef struct KsSolution KsSolution;

typedef struct KsSystem KsSystem;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread ("" after a success).
// The pointer stays valid until the next library call on this thread.
const char *ks_last_error(void);

// Library version, a static string.
const char *ks_version(void);

// Releases a string returned by the library. Null is ignored.
//
// # Safety
// `s` must come from this library and not have been freed.
void ks_string_free(char *s);

// Builds a system from its JSON description (inline components or a builtin).
//
// # Safety
// `json` must be a NUL-terminated string, `out` a valid pointer.
enum KsStatus ks_system_from_json(const char *json, struct KsSystem **out);

// # Safety
// `sys` must come from [`ks_system_from_json`] and not have been freed.
void ks_system_free(struct KsSystem *sys);

// State dimension, 0 for a null handle.
//
// # Safety
// `sys` must be null or a live handle.
size_t ks_system_dim(const struct KsSystem *sys);

// `out = f(x)`, both of length `n` (the vector field or the map).
//
// # Safety
// `x` and `out` must hold `n` doubles.
enum KsStatus ks_system_eval(const struct KsSystem *sys, const double *x, size_t n, double *out);

// Whether the 1-based indices form a subsystem.
//
// # Safety
// `idx` must hold `len` entries, `out` must be valid.
enum KsStatus ks_system_is_subsystem(const struct KsSystem *sys,
                                     const size_t *idx,
                                     size_t len,
                                     bool *out);

// JSON array of all subsystems (1-based index arrays). Fails with
// `KS_STATUS_OVERFLOW` when there are more than `cap`.
//
// # Safety
// `out` must be valid; release the string with [`ks_string_free`].
enum KsStatus ks_system_subsystems_json(const struct KsSystem *sys, size_t cap, char **out);

// Assembles a moment problem, e.g. `{"mode":"full","degree":8,"cost":"x1"}`.
//
// # Safety
// `config_json` must be a NUL-terminated string, `out` valid.
enum KsStatus ks_moment_problem_build(const struct KsSystem *sys,
                                      const char *config_json,
                                      struct KsMomentProblem **out);

// # Safety
// `p` must be null or a live handle.
void ks_moment_problem_free(struct KsMomentProblem *p);

// Number of moment variables, 0 for a null handle.
//
// # Safety
// `p` must be null or a live handle.
size_t ks_moment_problem_nvars(const struct KsMomentProblem *p);

// Counts (variables, equalities, block sizes) as JSON.
//
// # Safety
// `out` must be valid; release the string with [`ks_string_free`].
enum KsStatus ks_moment_problem_counts_json(const struct KsMomentProblem *p, char **out);

// Writes SDPA sparse format to `path` and the sidecar next to it.
//
// # Safety
// `path` must be a NUL-terminated string.
enum KsStatus ks_moment_problem_export_sdpa(const struct KsMomentProblem *p, const char *path);

// Largest equality violation and smallest PSD-block eigenvalue at `y`.
//
// # Safety
// `y` must hold `len` doubles; outputs must be valid.
enum KsStatus ks_moment_problem_verify(const struct KsMomentProblem *p,
                                       const double *y,
                                       size_t len,
                                       double tol,
                                       double *equality_max,
                                       double *psd_min_eig,
                                       bool *feasible);

// Solves with the built-in ADMM solver. `options_json` may be null for
// defaults, e.g. `{"max_iter":20000,"tol":1e-9}`.
//
// # Safety
// `options_json` must be null or NUL-terminated; `out` valid.
enum KsStatus ks_solve(const struct KsMomentProblem *p,
                       const char *options_json,
                       struct KsSolution **out);

// # Safety
// `s` must be null or a live handle.
void ks_solution_free(struct KsSolution *s);

// Objective value, NaN for a null handle.
//
// # Safety
// `s` must be null or a live handle.
double ks_solution_objective(const struct KsSolution *s);

// # Safety
// `s` and `out` must be valid.
enum KsStatus ks_solution_status(const struct KsSolution *s, enum KsSolveStatus *out);

// Copies the moment vector into `buf` (capacity `len`) and stores its
// length in `written`. With `len` too small nothing is copied, `written`
// still receives the required length and the call fails.
//
// # Safety
// `buf` must hold `len` doubles, `written` must be valid.
enum KsStatus ks_solution_moments(const struct KsSolution *s,
                                  double *buf,
                                  size_t len,
                                  size_t *written);

// Full solution report as JSON.
//
// # Safety
// `out` must be valid; release the string with [`ks_string_free`].
enum KsStatus ks_solution_json(const struct KsSolution *s, char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* KOOPMAN_SPARSE_H */
