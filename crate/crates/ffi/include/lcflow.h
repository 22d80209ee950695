#ifndef LCFLOW_H
#define LCFLOW_H

/* Generated by cbindgen from the lcflow-ffi sources; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Outcome of an API call.
 */
typedef enum LcflowStatus {
  LCFLOW_STATUS_OK = 0,
  LCFLOW_STATUS_NULL_POINTER = 1,
  LCFLOW_STATUS_INVALID_ARGUMENT = 2,
  LCFLOW_STATUS_CONFIG = 3,
  LCFLOW_STATUS_NUMERICAL = 4,
  LCFLOW_STATUS_IO = 5,
  LCFLOW_STATUS_CHECKPOINT = 6,
  LCFLOW_STATUS_BUFFER_TOO_SMALL = 7,
  LCFLOW_STATUS_PANIC = 8,
  LCFLOW_STATUS_OTHER = 9,
} LcflowStatus;

/**
 * Boundary data of the strip problem.
 */
typedef enum LcflowMode {
  LCFLOW_MODE_RAMP = 0,
  LCFLOW_MODE_ZERO = 1,
} LcflowMode;

/**
 * Run configuration.
 */
typedef struct LcflowConfig LcflowConfig;

/**
 * Stream function on the strip grid.
 */
typedef struct LcflowField LcflowField;

/**
 * Trivial and nontrivial one-dimensional minimizers at the critical coupling.
 */
typedef struct LcflowPair LcflowPair;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Last error message on this thread, or null. Valid until the next call on this thread.
 */
const char *lcflow_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *lcflow_version(void);

/**
 * Releases a string returned by this library.
 *
 * # Safety
 * `s` must be null or a pointer obtained from this library and not yet freed.
 */
void lcflow_string_free(char *s);

/**
 * Default configuration for `mode`.
 *
 * # Safety
 * `out_cfg` must be a valid pointer.
 */
enum LcflowStatus lcflow_config_default(enum LcflowMode mode, struct LcflowConfig **out_cfg);

/**
 * Parses and validates a TOML configuration.
 *
 * # Safety
 * `toml` must be a NUL-terminated string and `out_cfg` a valid pointer.
 */
enum LcflowStatus lcflow_config_from_toml(const char *toml, struct LcflowConfig **out_cfg);

/**
 * Effective configuration as TOML; release with [`lcflow_string_free`].
 *
 * # Safety
 * `cfg` must be a live handle and `out_toml` a valid pointer.
 */
enum LcflowStatus lcflow_config_to_toml(const struct LcflowConfig *cfg, char **out_toml);

/**
 * # Safety
 * `cfg` must be null or a live handle; it is invalid afterwards.
 */
void lcflow_config_free(struct LcflowConfig *cfg);

/**
 * Critical coupling and minimizer pair on the strip's vertical grid.
 *
 * # Safety
 * `cfg` must be a live handle and `out_pair` a valid pointer.
 */
enum LcflowStatus lcflow_pair_compute(const struct LcflowConfig *cfg, struct LcflowPair **out_pair);

/**
 * Critical coupling and the coupling actually used for the pair.
 *
 * # Safety
 * `pair` must be a live handle; the outputs must be valid pointers.
 */
enum LcflowStatus lcflow_pair_lambda(const struct LcflowPair *pair,
                                     double *lambda_star,
                                     double *lambda_used);

/**
 * Copies the nontrivial profile (`m + 1` nodal values) into `buf`.
 * `written` always receives the required length.
 *
 * # Safety
 * `pair` must be a live handle, `buf` valid for `len` doubles, `written` valid.
 */
enum LcflowStatus lcflow_pair_phibar(const struct LcflowPair *pair,
                                     double *buf,
                                     size_t len,
                                     size_t *written);

/**
 * # Safety
 * `pair` must be null or a live handle; it is invalid afterwards.
 */
void lcflow_pair_free(struct LcflowPair *pair);

/**
 * Heteroclinic stream function by continuation in the strip length.
 *
 * # Safety
 * `cfg` and `pair` must be live handles and `out_field` a valid pointer.
 */
enum LcflowStatus lcflow_heteroclinic(const struct LcflowConfig *cfg,
                                      const struct LcflowPair *pair,
                                      struct LcflowField **out_field);

/**
 * Grid of a field: node `(i, j)` sits at `(x_min + i hx, j hy)`.
 *
 * # Safety
 * `field` must be a live handle; the outputs must be valid pointers.
 */
enum LcflowStatus lcflow_field_grid(const struct LcflowField *field,
                                    size_t *nx,
                                    size_t *ny,
                                    double *x_min,
                                    double *hx,
                                    double *hy);

/**
 * Copies the nodal values, column by column (`k = i ny + j`).
 *
 * # Safety
 * `field` must be a live handle, `buf` valid for `len` doubles, `written` valid.
 */
enum LcflowStatus lcflow_field_values(const struct LcflowField *field,
                                      double *buf,
                                      size_t len,
                                      size_t *written);

/**
 * Bilinear interpolation of the field at `(x, y)`, clamped to the grid.
 *
 * # Safety
 * `field` must be a live handle and `value` a valid pointer.
 */
enum LcflowStatus lcflow_field_eval(const struct LcflowField *field,
                                    double x,
                                    double y,
                                    double *value);

/**
 * Flow checks of the field as a JSON object; release with [`lcflow_string_free`].
 *
 * # Safety
 * `cfg` and `field` must be live handles and `out_json` a valid pointer.
 */
enum LcflowStatus lcflow_flow_report_json(const struct LcflowConfig *cfg,
                                          const struct LcflowField *field,
                                          char **out_json);

/**
 * # Safety
 * `field` must be null or a live handle; it is invalid afterwards.
 */
void lcflow_field_free(struct LcflowField *field);

/**
 * Runs every stage into `out_dir` and returns the report as JSON.
 * A stage failure is reported inside the JSON; the status is then the
 * failing stage's category.
 *
 * # Safety
 * `cfg` must be a live handle, `out_dir` a NUL-terminated path and
 * `out_json` a valid pointer.
 */
enum LcflowStatus lcflow_run(const struct LcflowConfig *cfg,
                             const char *out_dir,
                             bool resume,
                             char **out_json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LCFLOW_H */
