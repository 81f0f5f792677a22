/* C ABI for the pursuit-evasion simulator. Generated by cbindgen; do not edit. */

#ifndef PURSUIT_H
#define PURSUIT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * ABI version reported by `pursuit_abi_version`; bump on breaking change.
 */
#define PURSUIT_ABI_VERSION 1

/**
 * Status codes returned by every fallible entry point.
 */
typedef enum PursuitStatus {
  PURSUIT_STATUS_OK = 0,
  PURSUIT_STATUS_NULL_ARGUMENT = 1,
  PURSUIT_STATUS_INVALID_UTF8 = 2,
  PURSUIT_STATUS_PARSE_ERROR = 3,
  PURSUIT_STATUS_VALIDATION_ERROR = 4,
  PURSUIT_STATUS_IO_ERROR = 5,
  PURSUIT_STATUS_INDEX_OUT_OF_RANGE = 6,
  PURSUIT_STATUS_BUFFER_TOO_SMALL = 7,
  PURSUIT_STATUS_EPISODE_OVER = 8,
  PURSUIT_STATUS_INTERNAL_ERROR = 9,
} PursuitStatus;

/**
 * Opaque scenario handle.
 */
typedef struct PursuitScenario PursuitScenario;

/**
 * Opaque single-episode simulation handle.
 */
typedef struct PursuitSim PursuitSim;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent error on this thread. The pointer stays
 * valid until the next failing call on the same thread; never free it.
 */
const char *pursuit_last_error(void);

uint32_t pursuit_abi_version(void);

/**
 * Load and validate a scenario TOML file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer slot.
 */
enum PursuitStatus pursuit_scenario_load(const char *path, struct PursuitScenario **out);

/**
 * Parse and validate a scenario from TOML text.
 *
 * # Safety
 * `toml` must be a NUL-terminated string and `out` a valid pointer slot.
 */
enum PursuitStatus pursuit_scenario_from_str(const char *toml, struct PursuitScenario **out);

/**
 * # Safety
 * `scenario` must come from a `pursuit_scenario_*` constructor and not be
 * freed twice. Null is a no-op.
 */
void pursuit_scenario_free(struct PursuitScenario *scenario);

/**
 * # Safety
 * `scenario` must be a live handle.
 */
uint32_t pursuit_scenario_num_robots(const struct PursuitScenario *scenario);

/**
 * Copy robot `index`'s id into `buf` (NUL-terminated). `written` receives
 * the id length excluding the NUL.
 *
 * # Safety
 * `buf` must point to at least `cap` writable bytes.
 */
enum PursuitStatus pursuit_scenario_robot_id(const struct PursuitScenario *scenario,
                                             uint32_t index,
                                             char *buf,
                                             uintptr_t cap,
                                             uintptr_t *written);

/**
 * Entries each robot steers with (UAV: planar acceleration; UGV: linear
 * and angular velocity request), all normalized to [−1, 1].
 */
uint32_t pursuit_action_dim(void);

/**
 * Create a seeded episode over `scenario`.
 *
 * # Safety
 * `scenario` must be a live handle and `out` a valid pointer slot.
 */
enum PursuitStatus pursuit_sim_new(const struct PursuitScenario *scenario,
                                   uint64_t seed,
                                   struct PursuitSim **out);

/**
 * # Safety
 * `sim` must come from `pursuit_sim_new` and not be freed twice.
 */
void pursuit_sim_free(struct PursuitSim *sim);

/**
 * Restart the episode with a fresh seed.
 *
 * # Safety
 * `sim` must be a live handle.
 */
enum PursuitStatus pursuit_sim_reset(struct PursuitSim *sim, uint64_t seed);

/**
 * # Safety
 * `sim` must be a live handle.
 */
bool pursuit_sim_done(const struct PursuitSim *sim);

/**
 * # Safety
 * `sim` must be a live handle.
 */
uint32_t pursuit_sim_steps_used(const struct PursuitSim *sim);

/**
 * Observation length for one robot (fixed for the scenario's lifetime).
 *
 * # Safety
 * `sim` must be a live handle; `out` a valid slot.
 */
enum PursuitStatus pursuit_sim_obs_dim(const struct PursuitSim *sim,
                                       uint32_t robot,
                                       uintptr_t *out);

/**
 * Copy robot `robot`'s current observation into `buf`.
 *
 * # Safety
 * `buf` must point to at least `cap` writable f64 slots.
 */
enum PursuitStatus pursuit_sim_observe(const struct PursuitSim *sim,
                                       uint32_t robot,
                                       double *buf,
                                       uintptr_t cap);

/**
 * Advance one step. `actions` holds `num_robots × pursuit_action_dim()`
 * values in roster order, each in [−1, 1]. On success `rewards_out` (when
 * non-null, `num_robots` slots) receives per-robot step rewards and
 * `terminal_out` (when non-null) the episode-over flag.
 *
 * # Safety
 * Pointers must honor the stated lengths; `sim` must be a live handle.
 */
enum PursuitStatus pursuit_sim_step(struct PursuitSim *sim,
                                    const double *actions,
                                    uintptr_t actions_len,
                                    double *rewards_out,
                                    uintptr_t rewards_cap,
                                    bool *terminal_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PURSUIT_H */
