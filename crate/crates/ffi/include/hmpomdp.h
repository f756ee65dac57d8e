#ifndef HMPOMDP_H
#define HMPOMDP_H

#pragma once

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible function.
 */
typedef enum HmStatus {
  HM_STATUS_OK = 0,
  HM_STATUS_NULL_ARGUMENT = 1,
  HM_STATUS_INVALID_UTF8 = 2,
  HM_STATUS_INPUT_ERROR = 3,
  HM_STATUS_RUNTIME_ERROR = 4,
  HM_STATUS_BUFFER_TOO_SMALL = 5,
  HM_STATUS_PANIC = 6,
} HmStatus;

/**
 * Robust evaluator selector.
 */
typedef enum HmEvalMode {
  HM_EVAL_MODE_AR = 0,
  HM_EVAL_MODE_ENUM = 1,
} HmEvalMode;

/**
 * A parsed model family.
 */
typedef struct HmFamily HmFamily;

/**
 * Controller parameters.
 */
typedef struct HmPolicy HmPolicy;

/**
 * Optimizer settings; fill with `hm_solve_options_default` first.
 */
typedef struct HmSolveOptions {
  double timeout_seconds;
  double alpha;
  double beta;
  double clip;
  size_t gd_steps;
  uint64_t seed;
  /**
   * Memory nodes; 0 probes a memory model.
   */
  size_t nodes;
  /**
   * Outer iteration cap; 0 means none.
   */
  size_t max_iterations;
  enum HmEvalMode eval_mode;
} HmSolveOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread; empty if none. The pointer
 * stays valid until the next call into this library on the same thread.
 */
const char *hm_last_error(void);

/**
 * Parses a model file.
 *
 * # Safety
 * `path` must be a nul-terminated string and `out` a valid pointer.
 */
enum HmStatus hm_family_load(const char *path, struct HmFamily **out);

/**
 * Parses a model from text in the model-file format.
 *
 * # Safety
 * `text` must be a nul-terminated string and `out` a valid pointer.
 */
enum HmStatus hm_family_from_string(const char *text, struct HmFamily **out);

/**
 * Releases a family. Null is ignored.
 *
 * # Safety
 * `family` must come from this library and not be used afterwards.
 */
void hm_family_free(struct HmFamily *family);

/**
 * Number of instances, saturated at `UINT64_MAX`.
 *
 * # Safety
 * Pointers must be valid.
 */
enum HmStatus hm_family_instance_count(const struct HmFamily *family, uint64_t *out);

/**
 * Number of holes, i.e. the length of an instance index.
 *
 * # Safety
 * Pointers must be valid.
 */
enum HmStatus hm_family_hole_count(const struct HmFamily *family, size_t *out);

/**
 * Default optimizer settings.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum HmStatus hm_solve_options_default(struct HmSolveOptions *out);

/**
 * Optimizes a robust controller. On success `*out` owns the best policy
 * found and `*robust_value` holds its robust value (NaN if the budget ran
 * out before the first evaluation).
 *
 * # Safety
 * Pointers must be valid; `robust_value` may be null.
 */
enum HmStatus hm_solve(const struct HmFamily *family,
                       const struct HmSolveOptions *options,
                       struct HmPolicy **out,
                       double *robust_value);

/**
 * Robust value of a policy. When `worst_index` is non-null it receives the
 * option of each hole for the worst instance; `len` must be at least the
 * hole count.
 *
 * # Safety
 * Pointers must be valid; `worst_index` may be null.
 */
enum HmStatus hm_robust_evaluate(const struct HmFamily *family,
                                 const struct HmPolicy *policy,
                                 enum HmEvalMode mode,
                                 double *value,
                                 size_t *worst_index,
                                 size_t len);

/**
 * Writes a policy file for `family`.
 *
 * # Safety
 * Pointers must be valid and `path` nul-terminated.
 */
enum HmStatus hm_policy_save(const struct HmFamily *family,
                             const struct HmPolicy *policy,
                             const char *path);

/**
 * Reads a policy file and checks it against `family`.
 *
 * # Safety
 * Pointers must be valid and `path` nul-terminated.
 */
enum HmStatus hm_policy_load(const struct HmFamily *family,
                             const char *path,
                             struct HmPolicy **out);

/**
 * Releases a policy. Null is ignored.
 *
 * # Safety
 * `policy` must come from this library and not be used afterwards.
 */
void hm_policy_free(struct HmPolicy *policy);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HMPOMDP_H */
