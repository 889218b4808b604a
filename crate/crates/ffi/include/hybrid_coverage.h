#ifndef HYBRID_COVERAGE_H
#define HYBRID_COVERAGE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum HcStatus {
  HC_STATUS_OK = 0,
  HC_STATUS_NULL_POINTER = 1,
  HC_STATUS_INVALID_ARGUMENT = 2,
  HC_STATUS_PARSE = 3,
  /**
   * The simulation halted on a fault; the handle stays readable.
   */
  HC_STATUS_FAULT = 4,
  HC_STATUS_PANIC = 5,
} HcStatus;

typedef enum HcVerdict {
  HC_VERDICT_PASS = 0,
  HC_VERDICT_WARN = 1,
  HC_VERDICT_FAIL = 2,
} HcVerdict;

/**
 * Opaque simulation handle.
 */
typedef struct HcSimulation HcSimulation;

/**
 * Summary of the scenario checks. Margins are in seconds except
 * `avoidance_margin`, which is a length.
 */
typedef struct HcCheckReport {
  enum HcVerdict interception;
  double interception_margin;
  double p_max;
  enum HcVerdict schedule;
  double schedule_margin_best;
  double schedule_margin_worst;
  enum HcVerdict avoidance;
  double avoidance_margin;
  enum HcVerdict capacity;
  enum HcVerdict overall;
} HcCheckReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread. The pointer stays valid
 * until the next failing call on the same thread.
 */
const char *hc_last_error(void);

/**
 * Build a simulation from TOML scenario text.
 *
 * # Safety
 * `text` must be a NUL-terminated string and `out` a writable pointer.
 */
enum HcStatus hc_simulation_new(const char *text, struct HcSimulation **out);

/**
 * Build the baseline scenario with the given seed.
 *
 * # Safety
 * `out` must be a writable pointer.
 */
enum HcStatus hc_simulation_new_baseline(uint64_t seed, struct HcSimulation **out);

/**
 * Release a handle. Null is ignored.
 *
 * # Safety
 * `sim` must come from `hc_simulation_new*` and not be used afterwards.
 */
void hc_simulation_free(struct HcSimulation *sim);

/**
 * Advance by `steps` fixed steps. Returns `HC_STATUS_FAULT` once a fault
 * halts the run, now or earlier.
 *
 * # Safety
 * `sim` must be a live handle.
 */
enum HcStatus hc_simulation_step(struct HcSimulation *sim, uint64_t steps);

/**
 * Current time and normalized coverage error.
 *
 * # Safety
 * `sim` must be a live handle; the outputs must be writable or null.
 */
enum HcStatus hc_simulation_status(struct HcSimulation *sim, double *time, double *coverage_error);

/**
 * Number of agents in the scenario.
 *
 * # Safety
 * `sim` must be a live handle and `count` writable.
 */
enum HcStatus hc_simulation_agent_count(struct HcSimulation *sim, size_t *count);

/**
 * Position of agent `index` into `xyz[0..3]` and its mode: 0 local coverage,
 * 1 return to base, 2 particle intercept, 3 partition transfer, 4 surface
 * transfer, −1 not yet deployed.
 *
 * # Safety
 * `sim` must be a live handle, `xyz` must hold three doubles, `mode` must
 * be writable or null.
 */
enum HcStatus hc_simulation_agent(struct HcSimulation *sim,
                                  size_t index,
                                  double *xyz,
                                  int32_t *mode);

/**
 * Number of events logged so far.
 *
 * # Safety
 * `sim` must be a live handle and `count` writable.
 */
enum HcStatus hc_simulation_event_count(struct HcSimulation *sim, size_t *count);

/**
 * Evaluate the scenario checks for TOML scenario text.
 *
 * # Safety
 * `text` must be NUL-terminated and `report` writable.
 */
enum HcStatus hc_check(const char *text, struct HcCheckReport *report);

/**
 * Shortest surface distance and initial heading (radians clockwise from
 * north) between two points given by geodetic latitude and longitude in
 * radians on the spheroid with radii `a` (equatorial) and `c` (polar).
 *
 * # Safety
 * `distance` must be writable; `heading` must be writable or null.
 */
enum HcStatus hc_geodesic(double a,
                          double c,
                          double lat1,
                          double lon1,
                          double lat2,
                          double lon2,
                          double *distance,
                          double *heading);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HYBRID_COVERAGE_H */
