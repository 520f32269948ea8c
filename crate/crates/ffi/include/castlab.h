#ifndef CASTLAB_H
#define CASTLAB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define CASTLAB_MODE_GROUPPUT 0

#define CASTLAB_MODE_ANYPUT 1

#define CASTLAB_VARIANT_CAPTURE 0

#define CASTLAB_VARIANT_NONCAPTURE 1

typedef enum CastlabStatus {
  CASTLAB_STATUS_OK = 0,
  CASTLAB_STATUS_NULL_ARGUMENT = 1,
  CASTLAB_STATUS_INVALID_UTF8 = 2,
  CASTLAB_STATUS_INVALID_CONFIG = 3,
  CASTLAB_STATUS_INVALID_ARGUMENT = 4,
  CASTLAB_STATUS_COMPUTATION_FAILED = 5,
  CASTLAB_STATUS_BUFFER_TOO_SMALL = 6,
  CASTLAB_STATUS_PANIC = 7,
} CastlabStatus;

/**
 * Network of nodes with power profiles and a topology.
 */
typedef struct CastlabNetwork CastlabNetwork;

/**
 * Full simulation setup.
 */
typedef struct CastlabSimConfig CastlabSimConfig;

/**
 * Metrics of a finished simulation.
 */
typedef struct CastlabSimResult CastlabSimResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *castlab_version(void);

/**
 * Message for the last failed call on this thread; empty after a success.
 * Valid until the next castlab call on the same thread.
 */
const char *castlab_last_error(void);

/**
 * Parses a network config (or the network of a simulation config) from JSON.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be writable.
 */
enum CastlabStatus castlab_network_from_json(const char *json, struct CastlabNetwork **out);

/**
 * Clique of `n` identical nodes; powers in watts.
 *
 * # Safety
 * `out` must be writable.
 */
enum CastlabStatus castlab_network_homogeneous(size_t n,
                                               double rho,
                                               double listen_cost,
                                               double transmit_cost,
                                               struct CastlabNetwork **out);

/**
 * Number of nodes, 0 for a null handle.
 *
 * # Safety
 * `net` must be null or a live handle.
 */
size_t castlab_network_node_count(const struct CastlabNetwork *net);

/**
 * # Safety
 * `net` must be null or a handle not yet freed.
 */
void castlab_network_free(struct CastlabNetwork *net);

/**
 * Oracle throughput and per-node listen/transmit fractions of a clique.
 * `alpha` and `beta` may be null; otherwise they need `len ≥` node count.
 *
 * # Safety
 * Pointers must be null or valid for the stated lengths.
 */
enum CastlabStatus castlab_oracle_solve(const struct CastlabNetwork *net,
                                        uint32_t mode_code,
                                        double *throughput,
                                        double *alpha,
                                        double *beta,
                                        size_t len);

/**
 * Entropy-perturbed optimum at temperature `sigma`; multipliers in 1/W.
 *
 * # Safety
 * Pointers must be null or valid for the stated lengths.
 */
enum CastlabStatus castlab_gibbs_solve(const struct CastlabNetwork *net,
                                       double sigma,
                                       uint32_t mode_code,
                                       double *throughput,
                                       double *eta,
                                       size_t len);

/**
 * Largest relative detailed-balance violation of the protocol rates at `eta`.
 *
 * # Safety
 * `eta` must hold `len` values equal to the node count.
 */
enum CastlabStatus castlab_verify_detailed_balance(const struct CastlabNetwork *net,
                                                   const double *eta,
                                                   size_t len,
                                                   double sigma,
                                                   uint32_t variant_code,
                                                   uint32_t mode_code,
                                                   double *max_violation);

/**
 * Parses a simulation config from JSON.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be writable.
 */
enum CastlabStatus castlab_sim_config_from_json(const char *json, struct CastlabSimConfig **out);

/**
 * # Safety
 * `cfg` must be a live handle.
 */
enum CastlabStatus castlab_sim_config_set_seed(struct CastlabSimConfig *cfg, uint64_t seed);

/**
 * # Safety
 * `cfg` must be null or a handle not yet freed.
 */
void castlab_sim_config_free(struct CastlabSimConfig *cfg);

/**
 * Runs the simulation to completion.
 *
 * # Safety
 * `cfg` must be a live handle; `out` must be writable.
 */
enum CastlabStatus castlab_simulate(const struct CastlabSimConfig *cfg,
                                    struct CastlabSimResult **out);

/**
 * Measured groupput and anyput (either pointer may be null) and event count.
 *
 * # Safety
 * `res` must be a live handle.
 */
enum CastlabStatus castlab_sim_result_throughput(const struct CastlabSimResult *res,
                                                 double *groupput,
                                                 double *anyput,
                                                 uint64_t *events);

/**
 * Full metrics as JSON; free with [`castlab_string_free`]. Null on failure.
 *
 * # Safety
 * `res` must be a live handle.
 */
char *castlab_sim_result_json(const struct CastlabSimResult *res);

/**
 * # Safety
 * `res` must be null or a handle not yet freed.
 */
void castlab_sim_result_free(struct CastlabSimResult *res);

/**
 * # Safety
 * `s` must be null or a string returned by this library and not yet freed.
 */
void castlab_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CASTLAB_H */
