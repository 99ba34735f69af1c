#ifndef TSCLAB_H
#define TSCLAB_H

/* Generated by cbindgen from crates/ffi; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum TsclabStatus {
  TSCLAB_STATUS_OK = 0,
  TSCLAB_STATUS_NULL_POINTER = 1,
  TSCLAB_STATUS_INVALID_ARGUMENT = 2,
  TSCLAB_STATUS_SHAPE = 3,
  TSCLAB_STATUS_NON_FINITE = 4,
  TSCLAB_STATUS_PARSE = 5,
  TSCLAB_STATUS_IO = 6,
  /**
   * A panic was caught at the boundary.
   */
  TSCLAB_STATUS_INTERNAL = 7,
} TsclabStatus;

/**
 * A set of flow matrices.
 */
typedef struct TsclabFlowSet TsclabFlowSet;

/**
 * A road network.
 */
typedef struct TsclabRoadnet TsclabRoadnet;

/**
 * A running simulation.
 */
typedef struct TsclabWorld TsclabWorld;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *tsclab_version(void);

/**
 * Message of the last failure on this thread, or NULL. Valid until the next failure.
 */
const char *tsclab_last_error(void);

/**
 * Raw and relative improvement of `ours` over `baseline`, in percent.
 *
 * # Safety
 * `raw` and `relative` must be valid for writes.
 */
enum TsclabStatus tsclab_relative_improvement(double baseline,
                                              double ours,
                                              double free_flow,
                                              double *raw,
                                              double *relative);

/**
 * A `rows × cols` grid with default lanes.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum TsclabStatus tsclab_roadnet_grid(size_t rows, size_t cols, struct TsclabRoadnet **out);

/**
 * Loads a roadnet JSON file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` valid for writes.
 */
enum TsclabStatus tsclab_roadnet_load(const char *path, struct TsclabRoadnet **out);

/**
 * Number of intersections, 0 for NULL.
 *
 * # Safety
 * `net` must be NULL or a live roadnet handle.
 */
size_t tsclab_roadnet_intersections(const struct TsclabRoadnet *net);

/**
 * # Safety
 * `net` must be NULL or a handle not yet freed.
 */
void tsclab_roadnet_free(struct TsclabRoadnet *net);

/**
 * A simulation on `net` with the vehicles of a flow file, or none if `flow_path` is NULL.
 *
 * # Safety
 * `net` must be a live roadnet handle, `flow_path` NULL or a NUL-terminated
 * string, and `out` valid for writes. The world keeps its own reference to the network.
 */
enum TsclabStatus tsclab_world_new(const struct TsclabRoadnet *net,
                                   const char *flow_path,
                                   struct TsclabWorld **out);

/**
 * Advances one second with one phase per intersection.
 *
 * # Safety
 * `world` must be live and `actions` point to `n` readable values.
 */
enum TsclabStatus tsclab_world_step(struct TsclabWorld *world, const size_t *actions, size_t n);

/**
 * Seconds simulated so far, 0 for NULL.
 *
 * # Safety
 * `world` must be NULL or live.
 */
uint64_t tsclab_world_clock(const struct TsclabWorld *world);

/**
 * Vehicles currently on the road, 0 for NULL.
 *
 * # Safety
 * `world` must be NULL or live.
 */
size_t tsclab_world_on_road(const struct TsclabWorld *world);

/**
 * The agent state of intersection `i` (phase one-hot, then lane densities).
 * Writes at most `capacity` values and stores the full length in `len`;
 * a short buffer yields a shape error after `len` is set.
 *
 * # Safety
 * `world` must be live, `out` valid for `capacity` writes (may be NULL when
 * `capacity` is 0) and `len` valid for writes.
 */
enum TsclabStatus tsclab_world_state(const struct TsclabWorld *world,
                                     size_t i,
                                     double *out,
                                     size_t capacity,
                                     size_t *len);

/**
 * Intersection pressure `|Σ w|`.
 *
 * # Safety
 * `world` must be live and `out` valid for writes.
 */
enum TsclabStatus tsclab_world_pressure(const struct TsclabWorld *world, size_t i, double *out);

/**
 * Average travel time so far, unfinished vehicles counted up to the current clock.
 *
 * # Safety
 * `world` must be live and `out` valid for writes.
 */
enum TsclabStatus tsclab_world_average_travel_time(const struct TsclabWorld *world, double *out);

/**
 * # Safety
 * `world` must be NULL or a handle not yet freed.
 */
void tsclab_world_free(struct TsclabWorld *world);

/**
 * Loads a flow-set directory.
 *
 * # Safety
 * `dir` must be a NUL-terminated string and `out` valid for writes.
 */
enum TsclabStatus tsclab_flowset_load(const char *dir, struct TsclabFlowSet **out);

/**
 * Number of flows, 0 for NULL.
 *
 * # Safety
 * `set` must be NULL or live.
 */
size_t tsclab_flowset_len(const struct TsclabFlowSet *set);

/**
 * # Safety
 * `set` must be NULL or a handle not yet freed.
 */
void tsclab_flowset_free(struct TsclabFlowSet *set);

/**
 * Exact Wasserstein distance between two equally sized flow sets.
 *
 * # Safety
 * `a` and `b` must be live and `out` valid for writes.
 */
enum TsclabStatus tsclab_exact_wasserstein(const struct TsclabFlowSet *a,
                                           const struct TsclabFlowSet *b,
                                           double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TSCLAB_H */
