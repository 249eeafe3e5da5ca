#ifndef FLOWTREE_H
#define FLOWTREE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum FtStatus {
  FT_STATUS_OK = 0,
  FT_STATUS_NULL_POINTER = 1,
  /**
   * Input rejected: malformed file, bad argument, invalid network.
   */
  FT_STATUS_INVALID_INPUT = 2,
  /**
   * Valid input that the pipeline could not process.
   */
  FT_STATUS_PIPELINE = 3,
  FT_STATUS_IO = 4,
  FT_STATUS_PANIC = 5,
} FtStatus;

typedef enum FtTemplate {
  FT_TEMPLATE_CHAIN = 0,
  FT_TEMPLATE_STAR = 1,
  FT_TEMPLATE_RANDOM_RADIAL = 2,
} FtTemplate;

typedef enum FtFamily {
  FT_FAMILY_LINEAR = 0,
  FT_FAMILY_QUADRATIC = 1,
  FT_FAMILY_POWER_LAW = 2,
  FT_FAMILY_MIXED = 3,
} FtFamily;

/**
 * Potential samples, one row per sample and one column per node.
 */
typedef struct FtMeasurements FtMeasurements;

/**
 * Candidate graph with flow functions and the operational tree.
 */
typedef struct FtNetwork FtNetwork;

/**
 * Learned spanning tree with edge weights and margins.
 */
typedef struct FtTopology FtTopology;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or NULL after a success.
 * The pointer stays valid until the next `ft_*` call on the same thread.
 */
const char *ft_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *ft_version(void);

/**
 * Releases a string returned by this library. NULL is ignored.
 *
 * # Safety
 * `s` must come from an `ft_*` call that documents ownership transfer.
 */
void ft_string_free(char *s);

/**
 * Parses a network from a NUL-terminated JSON document.
 *
 * # Safety
 * `json` must be a valid C string; `out` a writable pointer.
 */
enum FtStatus ft_network_from_json(const char *json, struct FtNetwork **out);

/**
 * Reads a network JSON file.
 *
 * # Safety
 * `path` must be a valid C string; `out` a writable pointer.
 */
enum FtStatus ft_network_load(const char *path, struct FtNetwork **out);

/**
 * Generates a seeded synthetic network; node 0 is the reference.
 *
 * # Safety
 * `out` must be a writable pointer.
 */
enum FtStatus ft_network_generate(enum FtTemplate template_,
                                  uintptr_t nodes,
                                  uintptr_t fictitious,
                                  enum FtFamily family,
                                  uint64_t seed,
                                  struct FtNetwork **out);

/**
 * Serializes a network to JSON. Free the result with [`ft_string_free`].
 *
 * # Safety
 * `network` must be a live handle; `out` a writable pointer.
 */
enum FtStatus ft_network_to_json(const struct FtNetwork *network, char **out);

/**
 * Number of nodes, or 0 for a NULL handle.
 *
 * # Safety
 * `network` must be NULL or a live handle.
 */
uintptr_t ft_network_node_count(const struct FtNetwork *network);

/**
 * # Safety
 * `network` must be NULL or a handle not yet freed.
 */
void ft_network_free(struct FtNetwork *network);

/**
 * Simulates `samples` potential vectors on the operational tree with the
 * default Gaussian injection model, optionally adding measurement noise of
 * relative variance `noise_frac`.
 *
 * # Safety
 * `network` must be a live handle; `out` a writable pointer.
 */
enum FtStatus ft_simulate(const struct FtNetwork *network,
                          uintptr_t samples,
                          uint64_t seed,
                          double noise_frac,
                          struct FtMeasurements **out);

/**
 * Wraps caller data laid out row-major: `data[s * nodes + a]` is the
 * potential of node `a` in sample `s`. The data is copied.
 *
 * # Safety
 * `data` must point to `samples * nodes` readable doubles.
 */
enum FtStatus ft_measurements_from_rows(uintptr_t nodes,
                                        uintptr_t samples,
                                        const double *data,
                                        struct FtMeasurements **out);

/**
 * Reads a measurement CSV (and its sidecar metadata when present).
 *
 * # Safety
 * `path` must be a valid C string; `out` a writable pointer.
 */
enum FtStatus ft_measurements_load(const char *path, struct FtMeasurements **out);

/**
 * # Safety
 * `ms` must be NULL or a live handle.
 */
uintptr_t ft_measurements_samples(const struct FtMeasurements *ms);

/**
 * # Safety
 * `ms` must be NULL or a live handle.
 */
uintptr_t ft_measurements_nodes(const struct FtMeasurements *ms);

/**
 * Copies all samples row-major into `buffer`, which must hold
 * `samples * nodes` doubles (`capacity` is checked).
 *
 * # Safety
 * `ms` must be a live handle; `buffer` writable for `capacity` doubles.
 */
enum FtStatus ft_measurements_copy_rows(const struct FtMeasurements *ms,
                                        double *buffer,
                                        uintptr_t capacity);

/**
 * # Safety
 * `ms` must be NULL or a handle not yet freed.
 */
void ft_measurements_free(struct FtMeasurements *ms);

/**
 * Learns the minimum-weight spanning tree. With a NULL `candidates` network
 * every node pair is a candidate.
 *
 * # Safety
 * `ms` must be a live handle, `candidates` NULL or a live handle, `out` writable.
 */
enum FtStatus ft_learn(const struct FtMeasurements *ms,
                       const struct FtNetwork *candidates,
                       struct FtTopology **out);

/**
 * # Safety
 * `topology` must be NULL or a live handle.
 */
uintptr_t ft_topology_edge_count(const struct FtTopology *topology);

/**
 * # Safety
 * `topology` must be NULL or a live handle.
 */
double ft_topology_total_weight(const struct FtTopology *topology);

/**
 * Edge `index` in selection order. `margin` is NaN for edges with no
 * replacement candidate. Any output pointer may be NULL.
 *
 * # Safety
 * `topology` must be a live handle; non-NULL outputs must be writable.
 */
enum FtStatus ft_topology_edge(const struct FtTopology *topology,
                               uintptr_t index,
                               uintptr_t *u,
                               uintptr_t *v,
                               double *weight,
                               double *margin);

/**
 * Fraction of the network's operational edges missing from `topology`.
 *
 * # Safety
 * Both handles must be live; `error` writable.
 */
enum FtStatus ft_eval(const struct FtTopology *topology,
                      const struct FtNetwork *network,
                      double *error);

/**
 * # Safety
 * `topology` must be NULL or a handle not yet freed.
 */
void ft_topology_free(struct FtTopology *topology);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FLOWTREE_H */
