#ifndef PURSUIT_TRACK_H
#define PURSUIT_TRACK_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PtStatus {
  PT_STATUS_OK = 0,
  PT_STATUS_NULL_POINTER = 1,
  /**
   * Buffer length or index out of range.
   */
  PT_STATUS_INVALID_ARGUMENT = 2,
  /**
   * Rejected configuration or malformed checkpoint.
   */
  PT_STATUS_CONFIG = 3,
  PT_STATUS_IO = 4,
  /**
   * The call is not valid in the handle's current state.
   */
  PT_STATUS_STATE = 5,
  PT_STATUS_INTERNAL = 6,
  PT_STATUS_PANIC = 7,
} PtStatus;

typedef struct PtFilter PtFilter;

typedef struct PtWorld PtWorld;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the calling thread's last error message into `buf` as a
 * NUL-terminated string, truncating to `len - 1` bytes. Returns the full
 * message length in bytes, excluding the terminator.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t pt_last_error(char *buf, size_t len);

/**
 * Builds a world from a JSON environment config, or from the defaults
 * when `config_json` is null, and starts an episode.
 *
 * # Safety
 * `config_json` must be null or a NUL-terminated string; `out` must be
 * writable.
 */
enum PtStatus pt_world_new(const char *config_json, uint64_t episode_seed, struct PtWorld **out);

/**
 * # Safety
 * `world` must be null or a handle from [`pt_world_new`] not yet freed.
 */
void pt_world_free(struct PtWorld *world);

/**
 * Starts a fresh episode on the same terrain and roster.
 *
 * # Safety
 * `world` must be a live handle.
 */
enum PtStatus pt_world_reset(struct PtWorld *world, uint64_t episode_seed);

/**
 * Number of learnable agents; actions and rewards are laid out per agent
 * in this order.
 *
 * # Safety
 * `world` must be a live handle and `out` writable.
 */
enum PtStatus pt_world_agent_count(const struct PtWorld *world, size_t *out);

/**
 * Length of one agent's base observation.
 *
 * # Safety
 * `world` must be a live handle and `out` writable.
 */
enum PtStatus pt_world_obs_dim(const struct PtWorld *world, size_t *out);

/**
 * Advances one step. `actions` holds `2 * agent_count` velocities
 * (x then y per agent), clipped to each agent's speed by the world.
 * `rewards` receives one value per agent; `done` may be null.
 *
 * # Safety
 * Pointers must be valid for the stated lengths.
 */
enum PtStatus pt_world_step(struct PtWorld *world,
                            const double *actions,
                            size_t actions_len,
                            double *rewards,
                            size_t rewards_len,
                            bool *done);

/**
 * Writes agent `agent`'s base observation into `out`.
 *
 * # Safety
 * `world` must be a live handle; `out` valid for `len` values.
 */
enum PtStatus pt_world_observe(const struct PtWorld *world, size_t agent, double *out, size_t len);

/**
 * Current step index.
 *
 * # Safety
 * `world` must be a live handle and `out` writable.
 */
enum PtStatus pt_world_time(const struct PtWorld *world, size_t *out);

/**
 * # Safety
 * `world` must be a live handle and `out` writable.
 */
enum PtStatus pt_world_done(const struct PtWorld *world, bool *out);

/**
 * Ground-truth evader position, two values.
 *
 * # Safety
 * `world` must be a live handle; `out` valid for `len` values.
 */
enum PtStatus pt_world_evader_position(const struct PtWorld *world, double *out, size_t len);

/**
 * Loads a filter checkpoint written by `pursuit-track train-filter`.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable.
 */
enum PtStatus pt_filter_load(const char *path, struct PtFilter **out);

/**
 * # Safety
 * `filter` must be null or a handle from [`pt_filter_load`] not yet freed.
 */
void pt_filter_free(struct PtFilter *filter);

/**
 * Number of mixture components `K` in each prediction.
 *
 * # Safety
 * `filter` must be a live handle and `out` writable.
 */
enum PtStatus pt_filter_components(const struct PtFilter *filter, size_t *out);

/**
 * Predicts the evader's position from the world's detection log. Writes
 * `K` weights, `2K` means and `2K` scales (x, y per component).
 *
 * # Safety
 * Handles must be live; each output valid for `k` and `2k` values.
 */
enum PtStatus pt_filter_predict(const struct PtFilter *filter,
                                const struct PtWorld *world,
                                double *weights,
                                double *means,
                                double *scales,
                                size_t k);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PURSUIT_TRACK_H */
