#ifndef FIELDTRIPLE_H
#define FIELDTRIPLE_H

/* Generated by the crate build script; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code returned by every fallible function in this API.
 */
typedef enum FtStatus {
  /**
   * The call succeeded.
   */
  FtStatus_Ok = 0,
  /**
   * A required pointer argument was null.
   */
  FtStatus_NullArgument = 1,
  /**
   * An argument was malformed: bad UTF-8, a wrong buffer length, or a
   * name the problem does not define.
   */
  FtStatus_InvalidArgument = 2,
  /**
   * The problem description could not be read, parsed, or assembled.
   */
  FtStatus_BadProblem = 3,
  /**
   * Evaluation failed at runtime, for example outside a field's domain.
   */
  FtStatus_EvalFailed = 4,
  /**
   * A panic was caught at the boundary. State is still consistent, but
   * the call did nothing.
   */
  FtStatus_Internal = 5,
} FtStatus;

/**
 * Opaque handle to a parsed verification problem.
 */
typedef struct FtProblem FtProblem;

/**
 * Opaque handle to the outcome of a verification run, one entry per check.
 */
typedef struct FtReport FtReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Returns the message describing the most recent failure on the calling
 * thread, or null if the last fallible call succeeded. The pointer stays
 * valid until the next call into this library from the same thread; do
 * not free it.
 */
const char *ft_last_error(void);

/**
 * Parses a problem description from a JSON string and writes a new handle
 * to `out`. Release the handle with [`ft_problem_free`].
 *
 * # Safety
 * `json` must point to a NUL-terminated string and `out` to writable
 * space for one pointer; both must stay valid for the duration of the
 * call.
 */
enum FtStatus ft_problem_from_json(const char *json, struct FtProblem **out);

/**
 * Reads a problem description from a JSON file and writes a new handle to
 * `out`. Release the handle with [`ft_problem_free`].
 *
 * # Safety
 * `path` must point to a NUL-terminated string and `out` to writable
 * space for one pointer; both must stay valid for the duration of the
 * call.
 */
enum FtStatus ft_problem_from_file(const char *path, struct FtProblem **out);

/**
 * Releases a problem handle. Passing null is a no-op.
 *
 * # Safety
 * `problem` must be a handle returned by this library that has not been
 * freed already, and must not be used after this call.
 */
void ft_problem_free(struct FtProblem *problem);

/**
 * Returns the base dimension of the problem, or 0 if `problem` is null.
 *
 * # Safety
 * `problem` must be null or a live handle returned by this library.
 */
size_t ft_problem_base_dim(const struct FtProblem *problem);

/**
 * Returns the fibre dimension of the problem, or 0 if `problem` is null.
 *
 * # Safety
 * `problem` must be null or a live handle returned by this library.
 */
size_t ft_problem_fiber_dim(const struct FtProblem *problem);

/**
 * Runs the full verification suite on the problem and writes a report
 * handle to `out`. Release the report with [`ft_report_free`]. The run
 * itself always succeeds; individual check outcomes are read from the
 * report.
 *
 * # Safety
 * `problem` must be a live handle returned by this library and `out`
 * must point to writable space for one pointer.
 */
enum FtStatus ft_problem_check(const struct FtProblem *problem, struct FtReport **out);

/**
 * Evaluates the Euler-Lagrange residual of a named section at a base
 * point. `x` must hold `ft_problem_base_dim` coordinates and `out` must
 * have room for `ft_problem_fiber_dim` values, one per field component.
 * Fails with `InvalidArgument` if the problem has no Lagrangian or does
 * not define the section.
 *
 * # Safety
 * `problem` must be a live handle returned by this library, `section` a
 * NUL-terminated string, `x` readable for `x_len` doubles, and `out`
 * writable for `out_len` doubles.
 */
enum FtStatus ft_el_residual(const struct FtProblem *problem,
                             const char *section,
                             const double *x,
                             size_t x_len,
                             double *out,
                             size_t out_len);

/**
 * Returns the number of entries in the report, or 0 if `report` is null.
 *
 * # Safety
 * `report` must be null or a live handle returned by this library.
 */
size_t ft_report_len(const struct FtReport *report);

/**
 * Returns the number of failed entries in the report, or 0 if `report`
 * is null.
 *
 * # Safety
 * `report` must be null or a live handle returned by this library.
 */
size_t ft_report_failures(const struct FtReport *report);

/**
 * Returns the status of entry `index`: 0 pass, 1 fail, 2 skipped, or -1
 * if `report` is null or the index is out of range.
 *
 * # Safety
 * `report` must be null or a live handle returned by this library.
 */
int32_t ft_report_entry_status(const struct FtReport *report, size_t index);

/**
 * Returns the worst violation of entry `index`, or NaN if `report` is
 * null or the index is out of range.
 *
 * # Safety
 * `report` must be null or a live handle returned by this library.
 */
double ft_report_entry_violation(const struct FtReport *report, size_t index);

/**
 * Returns the tolerance of entry `index`, or NaN if `report` is null or
 * the index is out of range.
 *
 * # Safety
 * `report` must be null or a live handle returned by this library.
 */
double ft_report_entry_tolerance(const struct FtReport *report, size_t index);

/**
 * Writes the name of entry `index` to `out` as a newly allocated string.
 * Release it with [`ft_string_free`].
 *
 * # Safety
 * `report` must be a live handle returned by this library and `out` must
 * point to writable space for one pointer.
 */
enum FtStatus ft_report_entry_name(const struct FtReport *report, size_t index, char **out);

/**
 * Writes the location of entry `index` to `out` as a newly allocated
 * string: where the worst violation was seen, or the reason an entry was
 * skipped. Release it with [`ft_string_free`].
 *
 * # Safety
 * `report` must be a live handle returned by this library and `out` must
 * point to writable space for one pointer.
 */
enum FtStatus ft_report_entry_location(const struct FtReport *report, size_t index, char **out);

/**
 * Serializes the whole report to pretty-printed JSON and writes it to
 * `out` as a newly allocated string. Release it with [`ft_string_free`].
 *
 * # Safety
 * `report` must be a live handle returned by this library and `out` must
 * point to writable space for one pointer.
 */
enum FtStatus ft_report_to_json(const struct FtReport *report, char **out);

/**
 * Releases a report handle. Passing null is a no-op.
 *
 * # Safety
 * `report` must be a handle returned by this library that has not been
 * freed already, and must not be used after this call.
 */
void ft_report_free(struct FtReport *report);

/**
 * Releases a string returned by this library. Passing null is a no-op.
 *
 * # Safety
 * `s` must be a string returned by this library that has not been freed
 * already, and must not be used after this call.
 */
void ft_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FIELDTRIPLE_H */
