#ifndef REACTIVE_HORIZON_H
#define REACTIVE_HORIZON_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RhStatus {
  RH_STATUS_OK = 0,
  RH_STATUS_NULL_ARGUMENT = 1,
  RH_STATUS_INVALID_UTF8 = 2,
  /**
   * Malformed or inconsistent input: schema, parameters, geometry.
   */
  RH_STATUS_INVALID_INPUT = 3,
  RH_STATUS_IO = 4,
  RH_STATUS_INDEX_OUT_OF_RANGE = 5,
  /**
   * Any other failure inside the library.
   */
  RH_STATUS_RUNTIME = 6,
  RH_STATUS_PANIC = 7,
} RhStatus;

typedef enum RhOutcome {
  RH_OUTCOME_GOAL_REACHED = 0,
  RH_OUTCOME_COLLISION = 1,
  RH_OUTCOME_INFEASIBLE_AFTER_DETECTION = 2,
  RH_OUTCOME_PLAN_FAILED = 3,
  RH_OUTCOME_TIME_LIMIT = 4,
} RhOutcome;

/**
 * Opaque plan handle.
 */
typedef struct RhPlan RhPlan;

/**
 * Opaque scenario handle.
 */
typedef struct RhScenario RhScenario;

/**
 * Opaque simulation result handle.
 */
typedef struct RhSimulation RhSimulation;

/**
 * Node of a planned trajectory.
 */
typedef struct RhNode {
  double t;
  double x;
  double y;
  double heading;
  double v;
  double omega;
  double accel;
  double alpha;
} RhNode;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next call on the same thread.
 */
const char *rh_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *rh_version(void);

/**
 * Loads and validates a scenario file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum RhStatus rh_scenario_load(const char *path, struct RhScenario **out);

/**
 * Parses and validates scenario JSON.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum RhStatus rh_scenario_from_json(const char *json, struct RhScenario **out);

/**
 * Loads one of the bundled scenarios by name (`empty`, `needle_050`,
 * `needle_020`, `blind_corner`).
 *
 * # Safety
 * `name` must be a NUL-terminated string and `out` a valid pointer.
 */
enum RhStatus rh_scenario_packaged(const char *name, struct RhScenario **out);

/**
 * # Safety
 * `scenario` must come from an `rh_scenario_*` constructor or be null.
 */
void rh_scenario_free(struct RhScenario *scenario);

/**
 * Plans once from the scenario's start over its provided map. A solve that
 * ends without convergence still yields a plan; check `rh_plan_converged`.
 *
 * # Safety
 * `scenario` must be a live handle and `out` a valid pointer.
 */
enum RhStatus rh_plan(const struct RhScenario *scenario, bool secure, struct RhPlan **out);

/**
 * # Safety
 * `plan` must be a live handle or null.
 */
void rh_plan_free(struct RhPlan *plan);

/**
 * Final time in seconds; NaN for a null handle.
 *
 * # Safety
 * `plan` must be a live handle or null.
 */
double rh_plan_final_time(const struct RhPlan *plan);

/**
 * # Safety
 * `plan` must be a live handle or null.
 */
bool rh_plan_converged(const struct RhPlan *plan);

/**
 * # Safety
 * `plan` must be a live handle or null.
 */
size_t rh_plan_node_count(const struct RhPlan *plan);

/**
 * # Safety
 * `plan` must be a live handle and `out` a valid pointer.
 */
enum RhStatus rh_plan_node(const struct RhPlan *plan, size_t index, struct RhNode *out);

/**
 * Plan trace in the CLI's CSV format.
 *
 * # Safety
 * `plan` must be a live handle and `out` a valid pointer.
 */
enum RhStatus rh_plan_trace_csv(const struct RhPlan *plan, char **out);

/**
 * Runs the closed loop against the scenario's true world.
 *
 * # Safety
 * `scenario` must be a live handle and `out` a valid pointer.
 */
enum RhStatus rh_simulate(const struct RhScenario *scenario,
                          bool secure,
                          uint64_t seed,
                          struct RhSimulation **out);

/**
 * # Safety
 * `sim` must be a live handle or null.
 */
void rh_simulation_free(struct RhSimulation *sim);

/**
 * # Safety
 * `sim` must be a live handle and `out` a valid pointer.
 */
enum RhStatus rh_simulation_outcome(const struct RhSimulation *sim, enum RhOutcome *out);

/**
 * # Safety
 * `sim` must be a live handle or null.
 */
bool rh_simulation_collision(const struct RhSimulation *sim);

/**
 * # Safety
 * `sim` must be a live handle or null.
 */
size_t rh_simulation_step_count(const struct RhSimulation *sim);

/**
 * # Safety
 * `sim` must be a live handle or null.
 */
size_t rh_simulation_detection_count(const struct RhSimulation *sim);

/**
 * # Safety
 * `sim` must be a live handle or null.
 */
size_t rh_simulation_stop_count(const struct RhSimulation *sim);

/**
 * Smallest distance to a true obstacle over the run; NaN for a null handle.
 *
 * # Safety
 * `sim` must be a live handle or null.
 */
double rh_simulation_min_clearance(const struct RhSimulation *sim);

/**
 * Per-step trace in the CLI's CSV format.
 *
 * # Safety
 * `sim` must be a live handle and `out` a valid pointer.
 */
enum RhStatus rh_simulation_trace_csv(const struct RhSimulation *sim, char **out);

/**
 * # Safety
 * `s` must come from this library or be null.
 */
void rh_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* REACTIVE_HORIZON_H */
