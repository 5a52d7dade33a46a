#ifndef HMPPO_H
#define HMPPO_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Length of the cost array in [`HmppoStepResult`].
 */
#define HMPPO_NUM_COSTS 3

/**
 * Synthetic traffic shapes accepted by [`hmppo_env_new`].
 */
typedef enum HmppoPattern {
  HMPPO_PATTERN_CONSTANT = 0,
  HMPPO_PATTERN_DIURNAL = 1,
  HMPPO_PATTERN_BURSTY = 2,
} HmppoPattern;

/**
 * Result of every fallible call.
 */
typedef enum HmppoStatus {
  HMPPO_STATUS_OK = 0,
  HMPPO_STATUS_NULL_POINTER = 1,
  HMPPO_STATUS_INVALID_ARGUMENT = 2,
  HMPPO_STATUS_INVALID_CONFIG = 3,
  HMPPO_STATUS_NOT_FOUND = 4,
  HMPPO_STATUS_PARSE = 5,
  HMPPO_STATUS_IO = 6,
  HMPPO_STATUS_INTEGRITY = 7,
  HMPPO_STATUS_VERSION = 8,
  HMPPO_STATUS_DIMENSION = 9,
  HMPPO_STATUS_DIVERGENCE = 10,
  HMPPO_STATUS_INVALID_ACTION = 11,
  HMPPO_STATUS_PANIC = 12,
  HMPPO_STATUS_OTHER = 13,
} HmppoStatus;

/**
 * Opaque controller handle (greedy, static or a trained checkpoint).
 */
typedef struct HmppoController HmppoController;

/**
 * Opaque environment handle.
 */
typedef struct HmppoEnv HmppoEnv;

/**
 * Opaque scenario handle.
 */
typedef struct HmppoScenario HmppoScenario;

/**
 * Measurements of one environment step.
 */
typedef struct HmppoStepResult {
  /**
   * Fraction of active users with every QoS target met.
   */
  double satisfaction;
  /**
   * Delay-violation, reliability-violation and isolation-overdraw rates.
   */
  double costs[HMPPO_NUM_COSTS];
  double served_bits;
  double offered_bits;
  /**
   * Nonzero once the episode horizon is reached.
   */
  uint8_t done;
} HmppoStepResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the calling thread's last error message into `buf` (NUL-terminated,
 * truncated to `len` bytes) and returns the full message length in bytes.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t hmppo_last_error(char *buf, size_t len);

/**
 * Library version as a static NUL-terminated string.
 */
const char *hmppo_version(void);

/**
 * Creates the built-in desk scenario.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one pointer.
 */
enum HmppoStatus hmppo_scenario_desk(struct HmppoScenario **out);

/**
 * Loads and validates a scenario TOML file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` as in [`hmppo_scenario_desk`].
 */
enum HmppoStatus hmppo_scenario_load(const char *path, struct HmppoScenario **out);

/**
 * # Safety
 * `scenario` must be null or a handle from this library, freed at most once.
 */
void hmppo_scenario_free(struct HmppoScenario *scenario);

/**
 * Number of slices, or 0 for a null handle.
 *
 * # Safety
 * `scenario` must be null or a live handle.
 */
size_t hmppo_scenario_num_slices(const struct HmppoScenario *scenario);

/**
 * Number of users, or 0 for a null handle.
 *
 * # Safety
 * `scenario` must be null or a live handle.
 */
size_t hmppo_scenario_num_users(const struct HmppoScenario *scenario);

/**
 * Creates an environment driven by a synthetic trace at `load` (in `[0, 1.2]`).
 *
 * # Safety
 * `scenario` must be a live handle; `out` as in [`hmppo_scenario_desk`].
 */
enum HmppoStatus hmppo_env_new(const struct HmppoScenario *scenario,
                               double load,
                               enum HmppoPattern pattern,
                               uint64_t seed,
                               struct HmppoEnv **out);

/**
 * # Safety
 * `env` must be null or a handle from this library, freed at most once.
 */
void hmppo_env_free(struct HmppoEnv *env);

/**
 * Restarts the episode on the same trace.
 *
 * # Safety
 * `env` must be a live handle.
 */
enum HmppoStatus hmppo_env_reset(struct HmppoEnv *env);

/**
 * Applies a caller-built decision. `admissions` holds one byte per slice,
 * `slice_budgets` three shares (radio, bandwidth, compute) per slice, and
 * `user_allocations` three shares per user. Infeasible values are projected
 * onto the feasible set. `out` may be null.
 *
 * # Safety
 * Array pointers must reference at least the stated number of elements.
 */
enum HmppoStatus hmppo_env_step(struct HmppoEnv *env,
                                const uint8_t *admissions,
                                const double *slice_budgets,
                                const double *user_allocations,
                                struct HmppoStepResult *out);

/**
 * Nonzero once the episode horizon is reached (also for a null handle).
 *
 * # Safety
 * `env` must be null or a live handle.
 */
uint8_t hmppo_env_done(const struct HmppoEnv *env);

/**
 * Creates the priority-greedy controller.
 *
 * # Safety
 * `out` as in [`hmppo_scenario_desk`].
 */
enum HmppoStatus hmppo_controller_greedy(struct HmppoController **out);

/**
 * Creates a static controller with fixed per-slice shares summing to at most 1.
 *
 * # Safety
 * `shares` must point to `num_slices` values; `out` as in [`hmppo_scenario_desk`].
 */
enum HmppoStatus hmppo_controller_static(const double *shares,
                                         size_t num_slices,
                                         struct HmppoController **out);

/**
 * Loads a trained PPO or DQN checkpoint and checks it against `scenario`.
 *
 * # Safety
 * `path` must be a NUL-terminated string, `scenario` a live handle and `out`
 * as in [`hmppo_scenario_desk`].
 */
enum HmppoStatus hmppo_controller_load(const char *path,
                                       const struct HmppoScenario *scenario,
                                       struct HmppoController **out);

/**
 * # Safety
 * `controller` must be null or a handle from this library, freed at most once.
 */
void hmppo_controller_free(struct HmppoController *controller);

/**
 * Lets `controller` decide and applies the decision to `env`. `out` may be null.
 *
 * # Safety
 * `controller` and `env` must be live handles.
 */
enum HmppoStatus hmppo_controller_step(struct HmppoController *controller,
                                       struct HmppoEnv *env,
                                       struct HmppoStepResult *out);

/**
 * Resets `env` and runs a full episode, writing the mean satisfaction rate.
 *
 * # Safety
 * `controller` and `env` must be live handles; `satisfaction` must be writable.
 */
enum HmppoStatus hmppo_run_episode(struct HmppoController *controller,
                                   struct HmppoEnv *env,
                                   double *satisfaction);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HMPPO_H */
