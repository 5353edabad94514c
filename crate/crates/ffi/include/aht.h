#ifndef AHT_H
#define AHT_H

/* Generated by cbindgen from crates/ffi/src. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum AhtStatus {
  AHT_STATUS_OK = 0,
  AHT_STATUS_NULL_POINTER = 1,
  AHT_STATUS_INVALID_ARGUMENT = 2,
  AHT_STATUS_WIDTH_MISMATCH = 3,
  AHT_STATUS_CHECKPOINT = 4,
  AHT_STATUS_NUMERICAL = 5,
  AHT_STATUS_IO = 6,
  /**
   * The episode has ended; reset before stepping again.
   */
  AHT_STATUS_EPISODE_OVER = 7,
  AHT_STATUS_PANIC = 8,
} AhtStatus;

/**
 * One environment configuration and its current episode.
 */
typedef struct AhtEnv AhtEnv;

/**
 * A frozen policy with its own action-sampling stream.
 */
typedef struct AhtPolicy AhtPolicy;

/**
 * Result of a finished episode.
 */
typedef struct AhtOutcome {
  size_t true_hypothesis;
  size_t num_wrong;
  uint64_t total_samples;
  double terminal_cost;
  /**
   * `c * sum(tau) + J`.
   */
  double risk;
} AhtOutcome;

/**
 * Evaluation summary.
 */
typedef struct AhtMetrics {
  size_t episodes;
  double error_rate;
  double error_se;
  double avg_sample_size;
  double sample_se;
  double bayes_risk;
  double risk_se;
} AhtMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. Valid until the
 * next failing call on the same thread.
 */
const char *aht_last_error(void);

/**
 * Static name of a status code.
 */
const char *aht_status_name(enum AhtStatus status);

/**
 * Environment with `num_agents` agents that all sample every process
 * (`no_overlap == false`) or split the processes into equal contiguous
 * blocks. The first episode is started with `seed`.
 *
 * # Safety
 * `out` must be valid for writing a pointer.
 */
enum AhtStatus aht_env_new(size_t num_processes,
                           size_t num_agents,
                           double sampling_cost,
                           bool no_overlap,
                           bool communication,
                           uint64_t seed,
                           struct AhtEnv **out);

/**
 * Environment from a run configuration file (the `env.*` and `run.mode`
 * keys apply).
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be valid for writing.
 */
enum AhtStatus aht_env_from_config(const char *path, uint64_t seed, struct AhtEnv **out);

/**
 * # Safety
 * `env` must come from this library and not be used afterwards. Null is a no-op.
 */
void aht_env_free(struct AhtEnv *env);

/**
 * Start a new episode.
 *
 * # Safety
 * `env` must be a live handle.
 */
enum AhtStatus aht_env_reset(struct AhtEnv *env, uint64_t seed);

/**
 * # Safety
 * `env` must be a live handle or null (returns 0).
 */
size_t aht_env_num_processes(const struct AhtEnv *env);

/**
 * # Safety
 * `env` must be a live handle or null (returns 0).
 */
size_t aht_env_num_agents(const struct AhtEnv *env);

/**
 * Width of the actor input, for callers that run their own network.
 *
 * # Safety
 * `env` must be a live handle or null (returns 0).
 */
size_t aht_env_policy_input_width(const struct AhtEnv *env);

/**
 * Copy the agent's belief into `out` (at least M values).
 *
 * # Safety
 * `env` must be a live handle; `out` must be valid for `len` writes.
 */
enum AhtStatus aht_env_belief(const struct AhtEnv *env, size_t agent, double *out, size_t len);

/**
 * Copy the agent's legal-slot mask (M + 1 bytes, 1 = legal) into `out`.
 *
 * # Safety
 * `env` must be a live handle; `out` must be valid for `len` writes.
 */
enum AhtStatus aht_env_action_mask(const struct AhtEnv *env,
                                   size_t agent,
                                   uint8_t *out,
                                   size_t len);

/**
 * Copy the agent's actor input into `out`.
 *
 * # Safety
 * `env` must be a live handle; `out` must be valid for `len` writes.
 */
enum AhtStatus aht_env_policy_input(const struct AhtEnv *env,
                                    size_t agent,
                                    double *out,
                                    size_t len);

/**
 * # Safety
 * `env` must be a live handle or null (returns false).
 */
bool aht_env_is_active(const struct AhtEnv *env, size_t agent);

/**
 * Advance one tick. `slots[k]` is agent k's head slot, negative for an
 * agent that has already stopped. `done` receives whether the episode ended.
 *
 * # Safety
 * `env` must be a live handle; `slots` must hold `len` values; `done` must
 * be valid for writing.
 */
enum AhtStatus aht_env_step(struct AhtEnv *env, const int64_t *slots, size_t len, bool *done);

/**
 * Outcome of the finished episode; `EpisodeOver` is not an error here but
 * `InvalidArgument` is returned while the episode is still running.
 *
 * # Safety
 * `env` must be a live handle; `out` must be valid for writing.
 */
enum AhtStatus aht_env_outcome(const struct AhtEnv *env, struct AhtOutcome *out);

/**
 * Actor from a training checkpoint, checked against `env`'s widths.
 * `greedy` picks the most probable slot instead of sampling; `seed` seeds
 * the sampling stream.
 *
 * # Safety
 * `path` must be a NUL-terminated string, `env` a live handle and `out`
 * valid for writing.
 */
enum AhtStatus aht_policy_load(const char *path,
                               const struct AhtEnv *env,
                               bool greedy,
                               uint64_t seed,
                               struct AhtPolicy **out);

/**
 * Highest-belief rule with stopping threshold `threshold` in (1/M, 1).
 *
 * # Safety
 * `env` must be a live handle and `out` valid for writing.
 */
enum AhtStatus aht_policy_heuristic(const struct AhtEnv *env,
                                    double threshold,
                                    struct AhtPolicy **out);

/**
 * # Safety
 * `policy` must come from this library and not be used afterwards. Null is a no-op.
 */
void aht_policy_free(struct AhtPolicy *policy);

/**
 * Head slot chosen by `policy` for an active `agent` in `env`'s episode.
 *
 * # Safety
 * `policy` and `env` must be live handles; `slot` must be valid for writing.
 */
enum AhtStatus aht_policy_act(struct AhtPolicy *policy,
                              const struct AhtEnv *env,
                              size_t agent,
                              size_t *slot);

/**
 * Evaluate `policy` on `episodes` fresh episodes of `env`'s configuration.
 * Deterministic in `seed`; the handle's own episode is left untouched.
 *
 * # Safety
 * `policy` and `env` must be live handles; `out` must be valid for writing.
 */
enum AhtStatus aht_evaluate(const struct AhtPolicy *policy,
                            const struct AhtEnv *env,
                            size_t episodes,
                            uint64_t seed,
                            struct AhtMetrics *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* AHT_H */
