#ifndef SYNTHDESIGN_H
#define SYNTHDESIGN_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum SdMethod {
  SD_METHOD_PER_UNIT = 0,
  SD_METHOD_TWO_WAY = 1,
  SD_METHOD_ONE_WAY = 2,
  SD_METHOD_SYNTHETIC_CONTROL_RANDOM = 3,
  SD_METHOD_DIFF_IN_MEANS_RANDOM = 4,
} SdMethod;

typedef enum SdScheme {
  SD_SCHEME_IID = 0,
  SD_SCHEME_MOVING_BLOCK = 1,
} SdScheme;

typedef enum SdSearchMode {
  SD_SEARCH_MODE_AUTO = 0,
  SD_SEARCH_MODE_EXACT = 1,
  SD_SEARCH_MODE_LOCAL = 2,
} SdSearchMode;

/**
 * Status codes; the nonzero values 2, 3 and 4 match the CLI exit codes.
 */
typedef enum SdStatus {
  SD_STATUS_OK = 0,
  /**
   * Invalid arguments or problem settings.
   */
  SD_STATUS_USAGE = 2,
  /**
   * Malformed or inconsistent data.
   */
  SD_STATUS_DATA = 3,
  /**
   * A solver failed to certify its solution.
   */
  SD_STATUS_SOLVER = 4,
  /**
   * A required pointer was null or a string was not UTF-8.
   */
  SD_STATUS_INVALID_POINTER = 5,
  /**
   * Internal panic caught at the boundary.
   */
  SD_STATUS_PANIC = 6,
} SdStatus;

typedef enum SdVariant {
  SD_VARIANT_PER_UNIT = 0,
  SD_VARIANT_TWO_WAY = 1,
  SD_VARIANT_ONE_WAY = 2,
} SdVariant;

typedef struct SdDesign SdDesign;

typedef struct SdPanel SdPanel;

/**
 * Settings for `sd_select_design` and `sd_export_mps`. Start from
 * `sd_design_options_default`.
 */
typedef struct SdDesignOptions {
  enum SdVariant variant;
  size_t k;
  /**
   * Ridge penalty, > 0.
   */
  double lambda;
  bool nonnegative;
  enum SdSearchMode mode;
  /**
   * Largest subset count exact mode will enumerate.
   */
  uint64_t enum_limit;
  size_t restarts;
  uint64_t seed;
} SdDesignOptions;

/**
 * Result of `sd_permutation_test`.
 */
typedef struct SdTestResult {
  double statistic;
  double p_value;
  double critical_value;
  size_t n_draws;
  bool reject;
} SdTestResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread, or null. Valid
 * until the next failing call on the same thread.
 */
const char *sd_last_error_message(void);

/**
 * Library version as a static string.
 */
const char *sd_version(void);

/**
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void sd_string_free(char *s);

/**
 * Parses a wide panel CSV (header of period labels, one row per unit).
 *
 * # Safety
 * `csv` must be a NUL-terminated string; `out` must be writable.
 */
enum SdStatus sd_panel_from_csv(const char *csv, size_t t_pre, struct SdPanel **out);

/**
 * Builds a panel from row-major values (`n_units × n_periods`).
 *
 * # Safety
 * `values` must point to `n_units * n_periods` doubles; `out` must be
 * writable.
 */
enum SdStatus sd_panel_from_values(const double *values,
                                   size_t n_units,
                                   size_t n_periods,
                                   size_t t_pre,
                                   struct SdPanel **out);

/**
 * # Safety
 * `panel` must be null or a live handle from this library.
 */
size_t sd_panel_n_units(const struct SdPanel *panel);

/**
 * # Safety
 * `panel` must be null or a live handle from this library.
 */
size_t sd_panel_n_periods(const struct SdPanel *panel);

/**
 * # Safety
 * `panel` must be null or a handle from this library not yet freed.
 */
void sd_panel_free(struct SdPanel *panel);

/**
 * Defaults: two-way, K = 1, λ = 0.01, nonnegative weights, auto mode,
 * enumeration limit 200000, 20 restarts, seed 0.
 */
struct SdDesignOptions sd_design_options_default(void);

/**
 * # Safety
 * `panel` and `options` must be valid; `out` must be writable.
 */
enum SdStatus sd_select_design(const struct SdPanel *panel,
                               const struct SdDesignOptions *options,
                               struct SdDesign **out);

/**
 * Number of treated units.
 *
 * # Safety
 * `design` must be null or a live handle.
 */
size_t sd_design_k(const struct SdDesign *design);

/**
 * Copies the treated unit indices (ascending, 0-based) into `out`,
 * which must hold at least `sd_design_k` entries.
 *
 * # Safety
 * `out` must point to `len` writable entries.
 */
enum SdStatus sd_design_treated(const struct SdDesign *design, size_t *out, size_t len);

/**
 * # Safety
 * `design` must be valid; `out` must be writable.
 */
enum SdStatus sd_design_objective(const struct SdDesign *design, double *out);

/**
 * Serializes the design (treated set, weights, objective) as JSON.
 *
 * # Safety
 * `design` must be valid; free `*out` with `sd_string_free`.
 */
enum SdStatus sd_design_to_json(const struct SdDesign *design, char **out);

/**
 * # Safety
 * `json` must be NUL-terminated; `out` must be writable.
 */
enum SdStatus sd_design_from_json(const char *json, struct SdDesign **out);

/**
 * # Safety
 * `design` must be null or a handle not yet freed.
 */
void sd_design_free(struct SdDesign *design);

/**
 * ATET over the panel's post-cutoff periods. Weights are refitted when
 * the design carries none for `method`.
 *
 * # Safety
 * Handles must be valid; `out` must be writable.
 */
enum SdStatus sd_estimate_atet(const struct SdPanel *panel,
                               const struct SdDesign *design,
                               enum SdMethod method,
                               double *out);

/**
 * Permutation test of the sharp null for the design's treated set.
 * `refit_design` re-selects the treated set on every permuted sample.
 *
 * # Safety
 * Handles must be valid; `out` must be writable.
 */
enum SdStatus sd_permutation_test(const struct SdPanel *panel,
                                  const struct SdDesign *design,
                                  enum SdMethod method,
                                  enum SdScheme scheme,
                                  size_t n_draws,
                                  double alpha,
                                  uint64_t seed,
                                  bool refit_design,
                                  struct SdTestResult *out);

/**
 * Writes the mixed-integer model for the options as free MPS text.
 *
 * # Safety
 * `panel` and `options` must be valid; free `*out` with `sd_string_free`.
 */
enum SdStatus sd_export_mps(const struct SdPanel *panel,
                            const struct SdDesignOptions *options,
                            char **out);

/**
 * Single-period closed-form objective of a treated set with free signs.
 *
 * # Safety
 * `a` must hold `n` values and `treated` `k` indices.
 */
enum SdStatus sd_closed_form_objective(enum SdVariant variant,
                                       const double *a,
                                       size_t n,
                                       const size_t *treated,
                                       size_t k,
                                       double sigma2,
                                       double *out);

/**
 * Number of treated sets of size `k` among `n` units, saturating at
 * `UINT64_MAX`.
 */
uint64_t sd_subset_count(size_t n, size_t k);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SYNTHDESIGN_H */
