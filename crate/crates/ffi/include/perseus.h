#ifndef PERSEUS_H
#define PERSEUS_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define PERSEUS_OK 0

/**
 * A required pointer argument was null.
 */
#define PERSEUS_ERR_NULL 1

/**
 * Malformed DAG, profiles or arguments.
 */
#define PERSEUS_ERR_INVALID 2

/**
 * Frontier characterization failed.
 */
#define PERSEUS_ERR_OPTIMIZE 3

/**
 * Schedule or computation index out of range.
 */
#define PERSEUS_ERR_RANGE 4

/**
 * Internal panic caught at the boundary.
 */
#define PERSEUS_ERR_PANIC 5

/**
 * Opaque handle to a characterized pipeline.
 */
typedef struct PerseusFrontier PerseusFrontier;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread. The pointer stays valid
 * until the next failing call on the same thread.
 */
const char *perseus_last_error_message(void);

/**
 * Characterizes the frontier of `dag_spec` (`1f1b:NxM`, `gpipe:NxM` or
 * `file:path`) under a profile document and stores a new handle in `out`.
 * A negative `p_blocking_watts` keeps the profile document's value.
 *
 * # Safety
 * String arguments must be NUL-terminated; `out` must be writable.
 */
int32_t perseus_frontier_new(const char *dag_spec,
                             const char *profiles_json,
                             uint32_t quantum_us,
                             double p_blocking_watts,
                             int64_t tau_us,
                             struct PerseusFrontier **out);

/**
 * Releases a handle. Null is ignored.
 *
 * # Safety
 * `h` must come from `perseus_frontier_new` and not be used afterwards.
 */
void perseus_frontier_free(struct PerseusFrontier *h);

/**
 * Iteration times at all-max frequencies and at minimum energy.
 *
 * # Safety
 * `h` must be a live handle; out-pointers must be writable.
 */
int32_t perseus_frontier_times(const struct PerseusFrontier *h,
                               int64_t *t_min_us,
                               int64_t *t_star_us);

/**
 * Number of frontier schedules and of computations per schedule.
 *
 * # Safety
 * `h` must be a live handle; out-pointers must be writable.
 */
int32_t perseus_frontier_size(const struct PerseusFrontier *h,
                              size_t *num_schedules,
                              size_t *num_computations);

/**
 * Index of the schedule to run when the slowest pipeline takes
 * `straggler_time_us`.
 *
 * # Safety
 * `h` must be a live handle; `index` must be writable.
 */
int32_t perseus_frontier_lookup(const struct PerseusFrontier *h,
                                int64_t straggler_time_us,
                                size_t *index);

/**
 * Planned/realized iteration time and realized effective energy of a
 * schedule.
 *
 * # Safety
 * `h` must be a live handle; out-pointers must be writable.
 */
int32_t perseus_schedule_summary(const struct PerseusFrontier *h,
                                 size_t index,
                                 int64_t *t_planned_us,
                                 int64_t *t_realized_us,
                                 int64_t *energy_realized_mj);

/**
 * Frequency of computation `computation` in schedule `index`; 0 for
 * computations without a tunable frequency.
 *
 * # Safety
 * `h` must be a live handle; `freq_mhz` must be writable.
 */
int32_t perseus_schedule_frequency(const struct PerseusFrontier *h,
                                   size_t index,
                                   size_t computation,
                                   uint32_t *freq_mhz);

/**
 * Splits `num_layers` latencies into `num_stages` contiguous stages.
 * `boundaries` receives `num_stages + 1` layer indices.
 *
 * # Safety
 * `latencies` must hold `num_layers` values; `boundaries` must have room
 * for `num_stages + 1`; `ratio` must be writable.
 */
int32_t perseus_partition(const double *latencies,
                          size_t num_layers,
                          size_t num_stages,
                          size_t *boundaries,
                          double *ratio);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PERSEUS_H */
