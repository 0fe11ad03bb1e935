#ifndef BRANCHOPT_H
#define BRANCHOPT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum {
  BO_STATUS_OK = 0,
  BO_STATUS_NULL_POINTER = 1,
  BO_STATUS_INVALID_UTF8 = 2,
  BO_STATUS_INVALID_CONFIG = 3,
  BO_STATUS_INVALID_DECOMPOSITION = 4,
  BO_STATUS_INVALID_LOAD = 5,
  BO_STATUS_SOLVE_FAILED = 6,
  BO_STATUS_IO = 7,
  BO_STATUS_BUFFER_TOO_SMALL = 8,
  BO_STATUS_PANIC = 9,
} BoStatus;

/**
 * A resolved run: decomposition, loads, assembled constraints and settings.
 */
typedef struct BoProblem BoProblem;

/**
 * Outcome of one descent.
 */
typedef struct BoResult BoResult;

/**
 * Objective split into its parts.
 */
typedef struct {
  double elastic;
  double volume;
  double perimeter;
  double total;
} BoObjective;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next call on the same thread.
 */
const char *bo_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *bo_version(void);

/**
 * Builds a problem from a JSON run configuration. Relative paths inside it
 * resolve against `base_dir`, which may be null for the working directory.
 *
 * # Safety
 * `json` and a non-null `base_dir` must be NUL-terminated strings; `out`
 * must be writable. On success `*out` owns a handle for [`bo_problem_free`].
 */
BoStatus bo_problem_from_json(const char *json, const char *base_dir, BoProblem **out);

/**
 * Builds a problem from a JSON run configuration file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable.
 */
BoStatus bo_problem_from_file(const char *path, BoProblem **out);

/**
 * Checks a configuration without keeping the problem.
 *
 * # Safety
 * As for [`bo_problem_from_json`].
 */
BoStatus bo_validate_json(const char *json, const char *base_dir);

/**
 * # Safety
 * `problem` must come from this library and not be freed twice. Null is ignored.
 */
void bo_problem_free(BoProblem *problem);

/**
 * Sizes of the assembled problem. Any output pointer may be null.
 *
 * # Safety
 * `problem` must be a live handle; non-null outputs must be writable.
 */
BoStatus bo_problem_sizes(const BoProblem *problem, size_t *unknowns, size_t *rows, size_t *cells);

/**
 * Overrides the outer iteration cap and stopping tolerance; a zero cap or
 * non-positive tolerance keeps the current value.
 *
 * # Safety
 * `problem` must be a live handle.
 */
BoStatus bo_problem_set_limits(BoProblem *problem, size_t max_iters, double stop_tol);

/**
 * Runs the alternating descent from the default start.
 *
 * # Safety
 * `problem` must be a live handle and `out` writable. On success `*out`
 * owns a handle for [`bo_result_free`].
 */
BoStatus bo_problem_run(BoProblem *problem, BoResult **out);

/**
 * # Safety
 * `result` must come from this library and not be freed twice. Null is ignored.
 */
void bo_result_free(BoResult *result);

/**
 * Convergence flag, iteration count and monotonicity flag. Any output
 * pointer may be null.
 *
 * # Safety
 * `result` must be a live handle; non-null outputs must be writable.
 */
BoStatus bo_result_status(const BoResult *result,
                          bool *converged,
                          size_t *iterations,
                          bool *monotone);

/**
 * Objective after the last iteration.
 *
 * # Safety
 * `result` must be a live handle and `out` writable.
 */
BoStatus bo_result_objective(const BoResult *result, BoObjective *out);

/**
 * Raster size of the phase mosaic, `nx` columns by `ny` rows.
 *
 * # Safety
 * `result` must be a live handle; outputs must be writable.
 */
BoStatus bo_result_raster_size(const BoResult *result, size_t *nx, size_t *ny);

/**
 * Copies the phase mosaic, bottom row first, into `buf`. With a short or
 * null buffer returns `BufferTooSmall` after storing the needed length in
 * `needed` (which may be null).
 *
 * # Safety
 * `result` must be a live handle; `buf` must hold `len` doubles.
 */
BoStatus bo_result_phase(const BoResult *result, double *buf, size_t len, size_t *needed);

/**
 * Writes the image, field and report files into `dir`.
 *
 * # Safety
 * Both handles must be live, `result` must come from running `problem`,
 * and `dir` must be a NUL-terminated string.
 */
BoStatus bo_write_outputs(const BoProblem *problem, const BoResult *result, const char *dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BRANCHOPT_H */
