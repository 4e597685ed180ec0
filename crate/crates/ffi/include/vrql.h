#ifndef VRQL_H
#define VRQL_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes. Validation and I/O failures use the same numbers as the CLI exit codes.
 */
typedef enum VrqlStatus {
  VRQL_STATUS_OK = 0,
  VRQL_STATUS_NULL_POINTER = 1,
  VRQL_STATUS_INVALID_ARGUMENT = 2,
  VRQL_STATUS_IO = 3,
  VRQL_STATUS_NON_CONVERGENCE = 4,
  VRQL_STATUS_SINGULAR_SYSTEM = 5,
  VRQL_STATUS_BUFFER_TOO_SMALL = 6,
  VRQL_STATUS_PANIC = 7,
} VrqlStatus;

/**
 * Opaque MDP handle.
 */
typedef struct VrqlMdp VrqlMdp;

/**
 * Opaque generative-model sampler handle.
 */
typedef struct VrqlSampler VrqlSampler;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread, or NULL. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *vrql_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *vrql_version(void);

/**
 * Releases a string returned by this library.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void vrql_string_free(char *s);

/**
 * Builds and validates an MDP from a row-major `[s][a][s']` kernel and `[s][a]` rewards.
 *
 * # Safety
 * `kernel` and `reward` must point to `kernel_len` and `reward_len` doubles;
 * `out` must be writable.
 */
enum VrqlStatus vrql_mdp_new(size_t num_states,
                             size_t num_actions,
                             const double *kernel,
                             size_t kernel_len,
                             const double *reward,
                             size_t reward_len,
                             double gamma,
                             double r_max,
                             struct VrqlMdp **out);

/**
 * Parses an MDP JSON document.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be writable.
 */
enum VrqlStatus vrql_mdp_from_json(const char *json, struct VrqlMdp **out);

/**
 * Reads an MDP JSON document from a file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum VrqlStatus vrql_mdp_from_file(const char *path, struct VrqlMdp **out);

/**
 * Serializes an MDP to JSON; free the result with [`vrql_string_free`].
 *
 * # Safety
 * `mdp` must be a live handle; `out` must be writable.
 */
enum VrqlStatus vrql_mdp_to_json(const struct VrqlMdp *mdp, char **out);

/**
 * # Safety
 * `mdp` must be NULL or a handle from this library that has not been freed.
 */
void vrql_mdp_free(struct VrqlMdp *mdp);

/**
 * Writes the state and action counts, discount and reward bound.
 *
 * # Safety
 * `mdp` must be a live handle; each output pointer may be NULL to skip it.
 */
enum VrqlStatus vrql_mdp_dims(const struct VrqlMdp *mdp,
                              size_t *num_states,
                              size_t *num_actions,
                              double *gamma,
                              double *r_max);

/**
 * Applies the Bellman operator to `theta` (length `|S||A|`).
 *
 * # Safety
 * Buffers must hold the stated number of doubles.
 */
enum VrqlStatus vrql_bellman_apply(const struct VrqlMdp *mdp,
                                   const double *theta,
                                   size_t theta_len,
                                   double *out,
                                   size_t out_len);

/**
 * Applies the empirical Bellman operator built from `next_states`, one
 * successor per `(s, a)` in row-major order.
 *
 * # Safety
 * Buffers must hold the stated number of elements.
 */
enum VrqlStatus vrql_empirical_bellman_apply(const struct VrqlMdp *mdp,
                                             const uint32_t *next_states,
                                             size_t next_len,
                                             const double *theta,
                                             size_t theta_len,
                                             double *out,
                                             size_t out_len);

/**
 * Value iteration to `tol`; writes `theta*` (length `|S||A|`).
 *
 * # Safety
 * `out` must hold `out_len` doubles.
 */
enum VrqlStatus vrql_solve_optimal_q(const struct VrqlMdp *mdp,
                                     double tol,
                                     double *out,
                                     size_t out_len);

/**
 * Greedy policy of `theta` with lowest-index tie-breaking; writes one action per state.
 *
 * # Safety
 * Buffers must hold the stated number of elements.
 */
enum VrqlStatus vrql_greedy_policy(const struct VrqlMdp *mdp,
                                   const double *theta,
                                   size_t theta_len,
                                   size_t *actions,
                                   size_t actions_len);

/**
 * Exact `Q^pi` for a deterministic policy (one action per state).
 *
 * # Safety
 * Buffers must hold the stated number of elements.
 */
enum VrqlStatus vrql_policy_q_exact(const struct VrqlMdp *mdp,
                                    const size_t *actions,
                                    size_t actions_len,
                                    double *out,
                                    size_t out_len);

/**
 * Instance complexity at `theta_star`: writes `sigma(theta*)` and the two scalars.
 *
 * # Safety
 * Buffers must hold the stated number of doubles; scalar outputs may be NULL.
 */
enum VrqlStatus vrql_instance_complexity(const struct VrqlMdp *mdp,
                                         const double *theta_star,
                                         size_t theta_len,
                                         double *sigma_out,
                                         size_t sigma_len,
                                         double *theta_norm,
                                         double *b0);

/**
 * Creates a seeded sampler for `mdp`. The sampler keeps its own copy of the
 * transition tables, so the MDP may be freed afterwards.
 *
 * # Safety
 * `mdp` must be a live handle; `out` must be writable.
 */
enum VrqlStatus vrql_sampler_new(const struct VrqlMdp *mdp,
                                 uint64_t seed,
                                 struct VrqlSampler **out);

/**
 * Child stream keyed by `label`; shares the parent's sample counter.
 *
 * # Safety
 * `sampler` must be a live handle, `label` NUL-terminated, `out` writable.
 */
enum VrqlStatus vrql_sampler_split(const struct VrqlSampler *sampler,
                                   const char *label,
                                   struct VrqlSampler **out);

/**
 * Draws one sample matrix: one successor per `(s, a)` in row-major order.
 *
 * # Safety
 * `sampler` must be a live handle; `out` must hold `out_len` integers.
 */
enum VrqlStatus vrql_sampler_draw(struct VrqlSampler *sampler, uint32_t *out, size_t out_len);

/**
 * Matrix samples drawn so far by this sampler and every stream split from
 * the same root; 0 for a NULL handle.
 *
 * # Safety
 * `sampler` must be NULL or a live handle.
 */
uint64_t vrql_sampler_samples_drawn(const struct VrqlSampler *sampler);

/**
 * # Safety
 * `sampler` must be NULL or a handle from this library that has not been freed.
 */
void vrql_sampler_free(struct VrqlSampler *sampler);

/**
 * Plans `K` and `{N_m}` for `num_epochs` epochs.
 *
 * # Safety
 * `sizes_out` must hold `sizes_len >= num_epochs` integers; scalar outputs may be NULL.
 */
enum VrqlStatus vrql_plan_parameters(double gamma,
                                     double delta,
                                     size_t num_pairs,
                                     size_t num_epochs,
                                     double c1,
                                     double c2,
                                     double base,
                                     uint64_t *epoch_length,
                                     uint64_t *sizes_out,
                                     size_t sizes_len,
                                     uint64_t *total_samples);

/**
 * Smallest `M >= 1` with `b0 / base^M <= epsilon`.
 *
 * # Safety
 * `out` must be writable.
 */
enum VrqlStatus vrql_epochs_needed(double epsilon, double b0, double base, size_t *out);

/**
 * Instance-dependent sample budget.
 *
 * # Safety
 * `out` must be writable.
 */
enum VrqlStatus vrql_corollary_budget(double gamma,
                                      double delta,
                                      size_t num_pairs,
                                      double epsilon,
                                      double b0,
                                      double c,
                                      double c_prime,
                                      uint64_t *out);

/**
 * Worst-case budget over `r_max`-bounded instances.
 *
 * # Safety
 * `out` must be writable.
 */
enum VrqlStatus vrql_worst_case_budget(double gamma,
                                       double delta,
                                       size_t num_pairs,
                                       double epsilon,
                                       double r_max,
                                       double c,
                                       uint64_t *out);

/**
 * Two-phase budget.
 *
 * # Safety
 * `out` must be writable.
 */
enum VrqlStatus vrql_t_max(double gamma,
                           double delta,
                           size_t num_pairs,
                           double epsilon,
                           double r_max,
                           double c,
                           uint64_t *out);

/**
 * Runs variance-reduced Q-learning from zero with epoch length `epoch_length`
 * and recentering sizes `recenter_sizes[0..num_epochs]`. Writes the final
 * iterate, its sup-norm error against a freshly solved `theta*`, and the
 * number of matrix samples consumed.
 *
 * # Safety
 * Buffers must hold the stated number of elements; scalar outputs may be NULL.
 */
enum VrqlStatus vrql_run(const struct VrqlMdp *mdp,
                         size_t num_epochs,
                         uint64_t epoch_length,
                         const uint64_t *recenter_sizes,
                         uint64_t seed,
                         double *theta_out,
                         size_t theta_len,
                         double *final_error,
                         uint64_t *total_samples);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VRQL_H */
