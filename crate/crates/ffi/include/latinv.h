#ifndef LATINV_H
#define LATINV_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum LatinvMetric {
  LATINV_METRIC_COSINE = 0,
  LATINV_METRIC_EUCLIDEAN = 1,
} LatinvMetric;

typedef enum LatinvStatus {
  LATINV_STATUS_OK = 0,
  LATINV_STATUS_NULL_POINTER = 1,
  LATINV_STATUS_INVALID_ARGUMENT = 2,
  LATINV_STATUS_DIMENSION_MISMATCH = 3,
  LATINV_STATUS_MODEL_FAILURE = 4,
  LATINV_STATUS_EMPTY_SCORES = 5,
  LATINV_STATUS_BUFFER_TOO_SMALL = 6,
  LATINV_STATUS_INTERNAL = 7,
  LATINV_STATUS_PANIC = 8,
} LatinvStatus;

typedef enum LatinvOracleKind {
  LATINV_ORACLE_KIND_ORTHONORMAL = 0,
  LATINV_ORACLE_KIND_NONLINEAR = 1,
} LatinvOracleKind;

/**
 * Analytic generator/extractor pair.
 */
typedef struct LatinvOracle LatinvOracle;

typedef struct LatinvReport LatinvReport;

typedef struct LatinvGaConfig {
  size_t population_size;
  double selection_rate;
  double mutation_ratio;
  size_t max_generations;
  size_t patience;
  size_t restarts;
  uint64_t rng_seed;
  enum LatinvMetric metric;
} LatinvGaConfig;

/**
 * Outcome of [`latinv_invert`].
 */
typedef struct LatinvInversion {
  double fitness;
  size_t best_restart;
  /**
   * Generations stepped by the winning restart.
   */
  size_t generations;
} LatinvInversion;

typedef struct LatinvOperatingPoint {
  double far_target;
  double threshold;
  double far;
  double tar;
  double sar_type1;
  double sar_type2;
} LatinvOperatingPoint;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *latinv_last_error(void);

struct LatinvGaConfig latinv_ga_config_default(void);

/**
 * Builds an analytic oracle. `image_dim` of 0 means "same as latent".
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum LatinvStatus latinv_oracle_new(enum LatinvOracleKind kind,
                                    size_t latent_dim,
                                    size_t image_dim,
                                    size_t feature_dim,
                                    uint64_t seed,
                                    struct LatinvOracle **out);

/**
 * # Safety
 * `oracle` must be null or a handle from `latinv_oracle_new` not yet freed.
 */
void latinv_oracle_free(struct LatinvOracle *oracle);

/**
 * # Safety
 * `oracle` must be null or a live handle.
 */
size_t latinv_oracle_latent_dim(const struct LatinvOracle *oracle);

/**
 * # Safety
 * `oracle` must be null or a live handle.
 */
size_t latinv_oracle_feature_dim(const struct LatinvOracle *oracle);

/**
 * Features of one latent: `extract(generate(latent))`.
 *
 * # Safety
 * `oracle` must be a live handle; `latent` must hold `latent_len` values
 * and `out` must have room for `out_len` values.
 */
enum LatinvStatus latinv_oracle_features(const struct LatinvOracle *oracle,
                                         const double *latent,
                                         size_t latent_len,
                                         double *out,
                                         size_t out_len);

/**
 * Searches the oracle's latent space for `target`. The winning latent is
 * written to `latent_out`.
 *
 * # Safety
 * `oracle` and `config` must be valid; `target` must hold `target_len`
 * values; `latent_out` must have room for `latent_len` values; `result`
 * may be null.
 */
enum LatinvStatus latinv_invert(const struct LatinvOracle *oracle,
                                const double *target,
                                size_t target_len,
                                const struct LatinvGaConfig *config,
                                double *latent_out,
                                size_t latent_len,
                                struct LatinvInversion *result);

/**
 * # Safety
 * `a` and `b` must each hold `len` values; `out` must be writable.
 */
enum LatinvStatus latinv_normalized_similarity(const double *a,
                                               const double *b,
                                               size_t len,
                                               double *out);

/**
 * Fraction of scores strictly above `threshold`.
 *
 * # Safety
 * `scores` must hold `len` values; `out` must be writable.
 */
enum LatinvStatus latinv_rate_above(const double *scores,
                                    size_t len,
                                    double threshold,
                                    double *out);

/**
 * # Safety
 * `imposter` must hold `len` values; `out` must be writable.
 */
enum LatinvStatus latinv_threshold_at_far(const double *imposter,
                                          size_t len,
                                          double far,
                                          double *out);

/**
 * Builds operating points for each FAR target from the four score lists.
 *
 * # Safety
 * Each array must hold the stated number of values; `out` must be a
 * valid pointer to writable storage for one handle.
 */
enum LatinvStatus latinv_report_new(const double *genuine,
                                    size_t genuine_len,
                                    const double *imposter,
                                    size_t imposter_len,
                                    const double *mated_type1,
                                    size_t mated_type1_len,
                                    const double *mated_type2,
                                    size_t mated_type2_len,
                                    const double *far_targets,
                                    size_t far_len,
                                    struct LatinvReport **out);

/**
 * Number of operating points, 0 for a null handle.
 *
 * # Safety
 * `report` must be null or a live handle.
 */
size_t latinv_report_len(const struct LatinvReport *report);

/**
 * Operating point `index`, ordered by FAR target ascending.
 *
 * # Safety
 * `report` must be a live handle; `out` must be writable.
 */
enum LatinvStatus latinv_report_point(const struct LatinvReport *report,
                                      size_t index,
                                      struct LatinvOperatingPoint *out);

/**
 * # Safety
 * `report` must be null or a handle from `latinv_report_new` not yet freed.
 */
void latinv_report_free(struct LatinvReport *report);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LATINV_H */
