#ifndef FPPHE_H
#define FPPHE_H

#pragma once

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum FppheStatus {
  FPPHE_STATUS_OK = 0,
  FPPHE_STATUS_INVALID_PARAMETER = 1,
  FPPHE_STATUS_NULL_POINTER = 2,
  FPPHE_STATUS_RESOURCE_LIMIT = 3,
  FPPHE_STATUS_EXHAUSTED = 4,
  FPPHE_STATUS_INFEASIBLE = 5,
  FPPHE_STATUS_UNSTABLE = 6,
  FPPHE_STATUS_FORMAT = 7,
  FPPHE_STATUS_IO = 8,
  FPPHE_STATUS_NOT_FOUND = 9,
  FPPHE_STATUS_PANIC = 10,
} FppheStatus;

/**
 * Type of an infected vertex.
 */
typedef enum FppheType {
  FPPHE_TYPE_UNINFECTED = 0,
  FPPHE_TYPE_FPP1 = 1,
  FPPHE_TYPE_FPP_LAMBDA = 2,
} FppheType;

typedef struct FppheGraph FppheGraph;

typedef struct FppheOutcome FppheOutcome;

/**
 * Rate constants of the feasibility model, laid out for C.
 */
typedef struct FppheRateConstants {
  double cin1;
  double cin2;
  double cin_d;
  double cout1;
  double cout2;
  double cout_d;
} FppheRateConstants;

typedef struct FppheHL {
  uint64_t h;
  uint64_t l;
  bool feasible;
  double h_coefficient;
  double lambda_zero;
} FppheHL;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *fpphe_last_error(void);

/**
 * # Safety
 * `s` must be null or a string returned by this library, not yet freed.
 */
void fpphe_string_free(char *s);

/**
 * Builds the tile with parameters `(D, L, H, R)`.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum FppheStatus fpphe_graph_tile(uint32_t d,
                                  uint32_t l,
                                  uint32_t h,
                                  uint32_t r,
                                  struct FppheGraph **out);

/**
 * # Safety
 * `out` must be valid for writes.
 */
enum FppheStatus fpphe_graph_complete_tree(uint32_t d, uint32_t h, struct FppheGraph **out);

/**
 * # Safety
 * `out` must be valid for writes.
 */
enum FppheStatus fpphe_graph_capped_tree(uint32_t d, uint32_t h, struct FppheGraph **out);

/**
 * Loads a graph from its JSON dump.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` valid for writes.
 */
enum FppheStatus fpphe_graph_from_json(const char *json, struct FppheGraph **out);

/**
 * # Safety
 * `g` must be null or a handle from this library, not yet freed.
 */
void fpphe_graph_free(struct FppheGraph *g);

/**
 * Number of vertices, or 0 for a null handle.
 *
 * # Safety
 * `g` must be null or a live handle.
 */
size_t fpphe_graph_vertex_count(const struct FppheGraph *g);

/**
 * Number of edges, parallel edges counted separately; 0 for a null handle.
 *
 * # Safety
 * `g` must be null or a live handle.
 */
size_t fpphe_graph_edge_count(const struct FppheGraph *g);

/**
 * Looks up a named vertex such as `"O"`, `"B"` or `"W_1"`.
 *
 * # Safety
 * `g` must be a live handle, `name` NUL-terminated and `out` valid for writes.
 */
enum FppheStatus fpphe_graph_landmark(const struct FppheGraph *g, const char *name, uint32_t *out);

/**
 * DOT rendering of the graph; release with [`fpphe_string_free`].
 *
 * # Safety
 * `g` must be a live handle and `out` valid for writes.
 */
enum FppheStatus fpphe_graph_to_dot(const struct FppheGraph *g, char **out);

/**
 * Runs trial `trial_index` of stream `master_seed` from `origin`: seeds are
 * placed with density `mu` on every other vertex, then the process runs
 * until `target` is infected. Pass `UINT32_MAX` as `target` to run until
 * nothing is left to infect.
 *
 * # Safety
 * `g` must be a live handle and `out` valid for writes.
 */
enum FppheStatus fpphe_simulate(const struct FppheGraph *g,
                                uint32_t origin,
                                uint32_t target,
                                double mu,
                                double lambda,
                                uint64_t master_seed,
                                uint64_t trial_index,
                                struct FppheOutcome **out);

/**
 * # Safety
 * `o` must be null or a handle from this library, not yet freed.
 */
void fpphe_outcome_free(struct FppheOutcome *o);

/**
 * Number of infected vertices, or 0 for a null handle.
 *
 * # Safety
 * `o` must be null or a live handle.
 */
size_t fpphe_outcome_infected_count(const struct FppheOutcome *o);

/**
 * Type and infection time of `v`. Uninfected vertices report
 * [`FppheType::Uninfected`] and an infinite time.
 *
 * # Safety
 * `o` must be a live handle; `ty` and `time` must be valid for writes.
 */
enum FppheStatus fpphe_outcome_vertex(const struct FppheOutcome *o,
                                      uint32_t v,
                                      enum FppheType *ty,
                                      double *time);

/**
 * Outcome as a JSON document; release with [`fpphe_string_free`].
 *
 * # Safety
 * `o` must be a live handle and `out` valid for writes.
 */
enum FppheStatus fpphe_outcome_to_json(const struct FppheOutcome *o, char **out);

/**
 * Extinction probability of the seed-blocked branching process with
 * offspring `Binomial(d, 1 - mu)`.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum FppheStatus fpphe_gw_extinction(uint32_t d, double mu, double *out);

/**
 * Writes whether `(d, mu)` is supercritical and whether the second
 * technical condition holds.
 *
 * # Safety
 * Both output pointers must be valid for writes.
 */
enum FppheStatus fpphe_tech_cond(uint32_t d, double mu, bool *supercritical, bool *second);

/**
 * # Safety
 * `c` must point to a valid struct and `out` be valid for writes.
 */
enum FppheStatus fpphe_lambda_zero(const struct FppheRateConstants *c, double *out);

/**
 * Smallest admissible `(H, L)`. An infeasible instance is not an error:
 * the call succeeds with `feasible == false`.
 *
 * # Safety
 * `c` must point to a valid struct and `out` be valid for writes.
 */
enum FppheStatus fpphe_solve_hl(double lambda,
                                const struct FppheRateConstants *c,
                                double frak_c,
                                uint64_t r,
                                struct FppheHL *out);

/**
 * Monte Carlo estimate for a JSON trial plan, returned as JSON. Trials run
 * on `workers` threads. Release the result with
 * [`fpphe_string_free`].
 *
 * # Safety
 * `plan_json` must be NUL-terminated and `out` valid for writes.
 */
enum FppheStatus fpphe_estimate_json(const char *plan_json, size_t workers, char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FPPHE_H */
