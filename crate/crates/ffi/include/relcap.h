#ifndef RELCAP_H
#define RELCAP_H

/* Generated by build.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RelcapStatus {
  RELCAP_STATUS_OK = 0,
  RELCAP_STATUS_NULL_POINTER = 1,
  RELCAP_STATUS_INVALID_INPUT = 2,
  RELCAP_STATUS_CONFIG = 3,
  RELCAP_STATUS_NUMERIC = 4,
  RELCAP_STATUS_EVAL = 5,
  RELCAP_STATUS_OTHER = 6,
  RELCAP_STATUS_PANIC = 7,
} RelcapStatus;

/**
 * Tri-state outcome of one instance.
 */
typedef enum RelcapTriState {
  RELCAP_TRI_STATE_RESCUE = 0,
  RELCAP_TRI_STATE_NEUTRAL = 1,
  RELCAP_TRI_STATE_MISGUIDANCE = 2,
} RelcapTriState;

/**
 * Opaque set of test predictions.
 */
typedef struct RelcapPredictionSet RelcapPredictionSet;

/**
 * Opaque tri-state report.
 */
typedef struct RelcapTriStateReport RelcapTriStateReport;

typedef struct RelcapUTest {
  double u;
  double p;
  /**
   * 1 for the exact null distribution, 0 for the normal approximation.
   */
  int32_t exact;
} RelcapUTest;

typedef struct RelcapMetrics {
  size_t n;
  double rmse;
  /**
   * NaN when undefined (constant truth).
   */
  double r2;
} RelcapMetrics;

typedef struct RelcapTriStateCounts {
  size_t eligible;
  size_t rescue;
  size_t neutral;
  size_t misguidance;
} RelcapTriStateCounts;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *relcap_version(void);

/**
 * Message of the last failed call on this thread; empty after a success.
 * Valid until the next relcap call on the same thread.
 */
const char *relcap_last_error(void);

/**
 * ln(1 + salary).
 */
enum RelcapStatus relcap_make_target(double salary_usd, double *out_log);

/**
 * exp(y) − 1.
 */
enum RelcapStatus relcap_invert_target(double log_target, double *out_usd);

/**
 * Cliff's δ of cohort `r` against cohort `m`.
 *
 * # Safety
 * `r` and `m` must point to `n_r` and `n_m` values.
 */
enum RelcapStatus relcap_cliffs_delta(const double *r,
                                      size_t n_r,
                                      const double *m,
                                      size_t n_m,
                                      double *out_delta);

/**
 * Two-sided Mann-Whitney U test of cohort `r` against cohort `m`.
 *
 * # Safety
 * `r` and `m` must point to `n_r` and `n_m` values.
 */
enum RelcapStatus relcap_mann_whitney_u(const double *r,
                                        size_t n_r,
                                        const double *m,
                                        size_t n_m,
                                        struct RelcapUTest *out_test);

/**
 * Classifies ΔE against `margin`; the boundary is Neutral.
 */
enum RelcapTriState relcap_tri_state(double delta_e, double margin);

/**
 * |y − base| − |y − graph| in dollars.
 */
double relcap_delta_e(double y, double base, double graph);

/**
 * Builds a prediction set from log-space truths and predictions keyed by
 * (player id, season).
 *
 * # Safety
 * `player_ids` must hold `n` NUL-terminated strings; `seasons`, `y_true_log`
 * and `y_pred_log` must hold `n` values; `model` must be NUL-terminated.
 */
enum RelcapStatus relcap_prediction_set_new(const char *model,
                                            const char *const *player_ids,
                                            const int32_t *seasons,
                                            const double *y_true_log,
                                            const double *y_pred_log,
                                            size_t n,
                                            struct RelcapPredictionSet **out_set);

/**
 * Number of rows in `set` (0 for null).
 *
 * # Safety
 * `set` must be null or a live handle.
 */
size_t relcap_prediction_set_len(const struct RelcapPredictionSet *set);

/**
 * # Safety
 * `set` must be null or a handle not freed before.
 */
void relcap_prediction_set_free(struct RelcapPredictionSet *set);

/**
 * Log-space RMSE and R² of `set`.
 *
 * # Safety
 * `set` must be a live handle.
 */
enum RelcapStatus relcap_metrics(const struct RelcapPredictionSet *set,
                                 struct RelcapMetrics *out_metrics);

/**
 * Tri-state report of `graph` against `base` on their shared keys.
 *
 * # Safety
 * `base` and `graph` must be live handles.
 */
enum RelcapStatus relcap_tri_state_report_new(const struct RelcapPredictionSet *base,
                                              const struct RelcapPredictionSet *graph,
                                              double tau,
                                              double margin,
                                              struct RelcapTriStateReport **out_report);

/**
 * # Safety
 * `report` must be a live handle.
 */
enum RelcapStatus relcap_tri_state_report_counts(const struct RelcapTriStateReport *report,
                                                 struct RelcapTriStateCounts *out_counts);

/**
 * # Safety
 * `report` must be null or a handle not freed before.
 */
void relcap_tri_state_report_free(struct RelcapTriStateReport *report);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RELCAP_H */
