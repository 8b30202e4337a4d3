#ifndef LIQUIDATION_H
#define LIQUIDATION_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes. Values 1–4 match the command-line exit codes.
 */
typedef enum LiqStatus {
  LIQ_STATUS_OK = 0,
  /**
   * Problem or parameters failed validation.
   */
  LIQ_STATUS_VALIDATION = 1,
  /**
   * Iteration cap hit, or the residual check failed. A report is still returned.
   */
  LIQ_STATUS_NOT_CONVERGED = 2,
  LIQ_STATUS_DIVERGED = 3,
  /**
   * Not produced here; reserved so codes match the command line.
   */
  LIQ_STATUS_ORACLE_PRECONDITION = 4,
  LIQ_STATUS_NULL_POINTER = 5,
  LIQ_STATUS_INVALID_UTF8 = 6,
  /**
   * Malformed JSON.
   */
  LIQ_STATUS_PARSE = 7,
  /**
   * Output buffer too small.
   */
  LIQ_STATUS_BUFFER_TOO_SMALL = 8,
  /**
   * Internal panic caught at the boundary.
   */
  LIQ_STATUS_PANIC = 9,
} LiqStatus;

/**
 * Opaque validated problem.
 */
typedef struct LiqProblem LiqProblem;

/**
 * Opaque solver result.
 */
typedef struct LiqReport LiqReport;

/**
 * Solver settings. Non-positive `dtheta`, `tol_grad` or `tol_residual`
 * select the automatic value.
 */
typedef struct LiqSolveOptions {
  double dtheta;
  double safety;
  size_t max_iters;
  double tol_grad;
  double tol_residual;
} LiqSolveOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Default settings: automatic step at 0.9 · 2/K, automatic tolerances.
 */
struct LiqSolveOptions liq_solve_options_default(void);

/**
 * Parses and validates a JSON problem document. On success `*out` owns a
 * problem that must be released with [`liq_problem_free`].
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be writable.
 */
enum LiqStatus liq_problem_from_json(const char *json, struct LiqProblem **out);

/**
 * # Safety
 * `problem` must come from [`liq_problem_from_json`] and not be freed twice.
 */
void liq_problem_free(struct LiqProblem *problem);

/**
 * Number of assets and number of time slices.
 *
 * # Safety
 * Pointers must be valid or null.
 */
enum LiqStatus liq_problem_shape(const struct LiqProblem *problem, size_t *assets, size_t *steps);

/**
 * Runs the solver. `options` may be null for defaults. On `Ok` and on
 * `NotConverged`, `*out` owns a report to release with [`liq_report_free`];
 * on any other status it is null.
 *
 * # Safety
 * `problem` must be a live handle; `out` must be writable.
 */
enum LiqStatus liq_solve(const struct LiqProblem *problem,
                         const struct LiqSolveOptions *options,
                         struct LiqReport **out);

/**
 * # Safety
 * `report` must come from [`liq_solve`] and not be freed twice.
 */
void liq_report_free(struct LiqReport *report);

/**
 * Copies the `(N+1) × d` holdings. Pass a null `buf` to query the length
 * through `needed`.
 *
 * # Safety
 * `buf` must hold `len` doubles; `needed` may be null.
 */
enum LiqStatus liq_report_holdings(const struct LiqReport *report,
                                   double *buf,
                                   size_t len,
                                   size_t *needed);

/**
 * Copies the `N × d` dual path. Same conventions as [`liq_report_holdings`].
 *
 * # Safety
 * See [`liq_report_holdings`].
 */
enum LiqStatus liq_report_dual(const struct LiqReport *report,
                               double *buf,
                               size_t len,
                               size_t *needed);

/**
 * Iteration count, convergence flag, system residual and final dual objective.
 *
 * # Safety
 * Output pointers may be null; non-null ones must be writable.
 */
enum LiqStatus liq_report_summary(const struct LiqReport *report,
                                  size_t *iterations,
                                  bool *converged,
                                  double *residual,
                                  double *objective);

/**
 * Capped Hamiltonian `H(p)` and its slope for one cost model.
 *
 * # Safety
 * `value` and `slope` must be writable.
 */
enum LiqStatus liq_hamiltonian(double eta,
                               double phi,
                               double psi,
                               double rho_max,
                               double p,
                               double *value,
                               double *slope);

/**
 * Copies the calling thread's last error message into `buf` (NUL-terminated,
 * truncated to fit) and returns the full message length in bytes, excluding
 * the terminator. Returns 0 when there is no error.
 *
 * # Safety
 * `buf` must hold `len` bytes, or be null to query the length.
 */
size_t liq_last_error_message(char *buf, size_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LIQUIDATION_H */
