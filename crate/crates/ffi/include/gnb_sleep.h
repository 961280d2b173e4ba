#ifndef GNB_SLEEP_H
#define GNB_SLEEP_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum GsStatus {
  GS_STATUS_OK = 0,
  GS_STATUS_NULL_POINTER = 1,
  GS_STATUS_INVALID_ARGUMENT = 2,
  GS_STATUS_CONFIG = 3,
  GS_STATUS_CAPACITY = 4,
  GS_STATUS_NON_CONVERGENCE = 5,
  GS_STATUS_UNSUPPORTED = 6,
  GS_STATUS_INFEASIBLE_ACTION = 7,
  GS_STATUS_IO = 8,
  GS_STATUS_PANIC = 9,
  GS_STATUS_INTERNAL = 10,
} GsStatus;

typedef enum GsCostKind {
  GS_COST_KIND_LINEAR = 0,
  GS_COST_KIND_QUADRATIC = 1,
  // The standard three-piece function.
  GS_COST_KIND_PIECEWISE = 2,
} GsCostKind;

typedef enum GsPolicyKind {
  GS_POLICY_KIND_OPTIMAL = 0,
  GS_POLICY_KIND_INDEX = 1,
  GS_POLICY_KIND_GREEDY = 2,
  GS_POLICY_KIND_UNIFORM = 3,
  GS_POLICY_KIND_ROUND_ROBIN = 4,
  GS_POLICY_KIND_ALWAYS_ON = 5,
} GsPolicyKind;

// Opaque cluster model.
typedef struct GsCluster GsCluster;

// Opaque per-cell index tables.
typedef struct GsIndexTables GsIndexTables;

// Opaque joint MDP solution.
typedef struct GsSolution GsSolution;

// State of one cell: whether it was on last segment and its residual user count.
typedef struct GsCellState {
  bool prev_on;
  uint32_t residual_users;
} GsCellState;

typedef struct GsSimSummary {
  double avg_cost;
  double ci_halfwidth;
  double lower_bound;
  // Percent gap to the lower bound.
  double delta_percent;
} GsSimSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or NULL.
// The pointer stays valid until the next failing call on the same thread.
const char *gs_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *gs_version(void);

// `m` identical cells with the standard parameters and arrival set `set` (1 to 5).
//
// # Safety
// `out` must be a valid pointer to writable storage for one handle.
enum GsStatus gs_cluster_new_standard(uint32_t m,
                                      uint32_t k,
                                      uint32_t set,
                                      enum GsCostKind cost,
                                      struct GsCluster **out);

// Build a cluster from configuration text in the library's file format.
//
// # Safety
// `text` must be a NUL-terminated UTF-8 string and `out` valid for one write.
enum GsStatus gs_cluster_from_config(const char *text, struct GsCluster **out);

// # Safety
// `c` must be NULL or a handle from a `gs_cluster_*` constructor not yet freed.
void gs_cluster_free(struct GsCluster *c);

// Number of cells, sleep limit and truncation level.
//
// # Safety
// `c` must be a live cluster handle; the out pointers must be valid.
enum GsStatus gs_cluster_dims(const struct GsCluster *c, uint32_t *m, uint32_t *k, uint32_t *n_th);

// # Safety
// `c` must be a live cluster handle and `value` valid for one write.
enum GsStatus gs_lower_bound(const struct GsCluster *c, double *value);

// Greedy sleep thresholds of one cell.
//
// # Safety
// `c` must be a live cluster handle; `gamma_l` and `gamma_u` valid for one write each.
enum GsStatus gs_greedy_thresholds(const struct GsCluster *c,
                                   uint32_t cell,
                                   double *gamma_l,
                                   double *gamma_u);

// Greedy action for a state of `len` cells; writes 1 (on) or 0 (off) per cell.
//
// # Safety
// `states` must point to `len` readable states and `on_out` to `len` writable bytes.
enum GsStatus gs_greedy_action(const struct GsCluster *c,
                               const struct GsCellState *states,
                               size_t len,
                               uint8_t *on_out);

// Solve the joint MDP. Fails with [`GsStatus::Capacity`] for instances over budget.
//
// # Safety
// `c` must be a live cluster handle and `out` valid for one write.
enum GsStatus gs_solve(const struct GsCluster *c, struct GsSolution **out);

// # Safety
// `s` must be NULL or a handle from [`gs_solve`] not yet freed.
void gs_solution_free(struct GsSolution *s);

// Optimal long-run average cost per segment.
//
// # Safety
// `s` must be a live solution handle and `gain` valid for one write.
enum GsStatus gs_solution_gain(const struct GsSolution *s, double *gain);

// Optimal action in a state.
//
// # Safety
// As [`gs_greedy_action`], with `s` a live solution handle.
enum GsStatus gs_solution_action(const struct GsSolution *s,
                                 const struct GsCellState *states,
                                 size_t len,
                                 uint8_t *on_out);

// Index tables for every cell of the cluster.
//
// # Safety
// `c` must be a live cluster handle and `out` valid for one write.
enum GsStatus gs_index_tables_build(const struct GsCluster *c, struct GsIndexTables **out);

// # Safety
// `t` must be NULL or a handle from [`gs_index_tables_build`] not yet freed.
void gs_index_tables_free(struct GsIndexTables *t);

// Index of state `(prev_on, n)` in cell `cell`.
//
// # Safety
// `t` must be a live tables handle and `value` valid for one write.
enum GsStatus gs_index_value(const struct GsIndexTables *t,
                             uint32_t cell,
                             bool prev_on,
                             uint32_t n,
                             double *value);

// Index-policy action with at most `k` cells off.
//
// # Safety
// As [`gs_greedy_action`], with `t` a live tables handle.
enum GsStatus gs_index_action(const struct GsIndexTables *t,
                              const struct GsCellState *states,
                              size_t len,
                              uint32_t k,
                              uint8_t *on_out);

// Simulate one policy for `segments` segments.
//
// # Safety
// `c` must be a live cluster handle and `summary` valid for one write.
enum GsStatus gs_simulate(const struct GsCluster *c,
                          enum GsPolicyKind policy,
                          uint64_t segments,
                          uint64_t seed,
                          struct GsSimSummary *summary);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GNB_SLEEP_H */
