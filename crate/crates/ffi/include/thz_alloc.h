#ifndef THZ_ALLOC_H
#define THZ_ALLOC_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum ThzStatus {
  THZ_STATUS_OK = 0,
  THZ_STATUS_NULL_POINTER = 1,
  THZ_STATUS_INVALID_INPUT = 2,
  THZ_STATUS_CONFIG = 3,
  THZ_STATUS_INFEASIBLE = 4,
  THZ_STATUS_MODE_MISMATCH = 5,
  THZ_STATUS_NUMERICAL = 6,
  THZ_STATUS_CAP_EXCEEDED = 7,
  THZ_STATUS_IO = 8,
  THZ_STATUS_BUFFER_TOO_SMALL = 9,
  THZ_STATUS_PANIC = 10,
} ThzStatus;

/**
 * Allocation strategy.
 */
typedef enum ThzStrategy {
  THZ_STRATEGY_ESB = 0,
  THZ_STRATEGY_ASB = 1,
  THZ_STRATEGY_DAMC = 2,
  THZ_STRATEGY_EQ = 3,
} ThzStrategy;

/**
 * Opaque experiment configuration.
 */
typedef struct ThzConfig ThzConfig;

/**
 * Opaque solve result.
 */
typedef struct ThzReport ThzReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *thz_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *thz_version(void);

/**
 * Default experiment configuration. Never null.
 */
struct ThzConfig *thz_config_default(void);

/**
 * Parses a TOML configuration into `*out`.
 *
 * # Safety
 * `toml` must be a valid NUL-terminated string and `out` a writable pointer.
 */
enum ThzStatus thz_config_from_toml(const char *toml, struct ThzConfig **out);

/**
 * Releases a configuration; null is ignored.
 *
 * # Safety
 * `cfg` must come from this library and not be freed twice.
 */
void thz_config_free(struct ThzConfig *cfg);

/**
 * Solves the scenario of `seed` with `strategy` into `*out`.
 *
 * # Safety
 * `cfg` must be a live configuration and `out` a writable pointer.
 */
enum ThzStatus thz_solve(const struct ThzConfig *cfg,
                         uint64_t seed,
                         enum ThzStrategy strategy,
                         struct ThzReport **out);

/**
 * Releases a report; null is ignored.
 *
 * # Safety
 * `report` must come from [`thz_solve`] and not be freed twice.
 */
void thz_report_free(struct ThzReport *report);

/**
 * Max-min throughput, bit/s; NaN for a null report.
 *
 * # Safety
 * `report` must be null or a live report.
 */
double thz_report_objective_bps(const struct ThzReport *report);

/**
 * Sum throughput, bit/s; NaN for a null report.
 *
 * # Safety
 * `report` must be null or a live report.
 */
double thz_report_aggregate_bps(const struct ThzReport *report);

/**
 * Whether the solve met its stopping criteria; false for a null report.
 *
 * # Safety
 * `report` must be null or a live report.
 */
bool thz_report_converged(const struct ThzReport *report);

/**
 * Number of users; 0 for a null report.
 *
 * # Safety
 * `report` must be null or a live report.
 */
uintptr_t thz_report_num_users(const struct ThzReport *report);

/**
 * Copies per-user throughputs (bit/s) into `buf` of length `len`.
 *
 * # Safety
 * `report` must be a live report and `buf` must hold `len` doubles.
 */
enum ThzStatus thz_report_per_user_bps(const struct ThzReport *report, double *buf, uintptr_t len);

/**
 * Full report as JSON, owned by the report; null for a null report.
 *
 * # Safety
 * `report` must be null or a live report. The string dies with the report.
 */
const char *thz_report_json(const struct ThzReport *report);

/**
 * Equal sub-band width of `s` bands in `b_tot` with guard bands `b_g`, Hz.
 *
 * # Safety
 * `out` must be a writable pointer.
 */
enum ThzStatus thz_esb_width_hz(double f_ref, double b_tot, double b_g, uintptr_t s, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* THZ_ALLOC_H */
