#ifndef DBCS_H
#define DBCS_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Boundary families, matching the library enum.
 */
typedef enum DbcsBoundary {
  Exact = 0,
  Asymptotic = 1,
  Mixture = 2,
} DbcsBoundary;

/**
 * Experimental designs, matching the library enum.
 */
typedef enum DbcsDesign {
  Fixed = 0,
  Bandit = 1,
  Timeseries = 2,
  Panel = 3,
} DbcsDesign;

/**
 * Status codes returned by every fallible call.
 */
typedef enum DbcsStatus {
  Ok = 0,
  NullPointer = 1,
  InvalidParameter = 2,
  PositivityViolation = 3,
  DataQuality = 4,
  BoundExceeded = 5,
  NumericalFailure = 6,
  SnapshotInvalid = 7,
  ParseError = 8,
  Panic = 9,
} DbcsStatus;

/**
 * Opaque engine handle. Create with `dbcs_engine_new`, destroy with
 * `dbcs_engine_free`. Not thread-safe; one stream per handle.
 */
typedef struct DbcsEngine DbcsEngine;

/**
 * One stream record. `has_yhat != 0` marks a present proxy prediction.
 */
typedef struct DbcsObservation {
  uint64_t unit_id;
  uint64_t time;
  uint8_t arm;
  uint8_t has_yhat;
  double outcome;
  double p1;
  double yhat;
} DbcsObservation;

/**
 * One emitted confidence band.
 */
typedef struct DbcsBand {
  uint64_t step;
  double center;
  double half_width;
  double lower;
  double upper;
} DbcsBand;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Create an engine. `m_bound` and `rho` use NaN (or any non-positive value)
 * as "unset"; the exact and mixture boundaries require a positive `m_bound`.
 *
 * # Safety
 * `out` must be a valid pointer to write one engine pointer through.
 */
enum DbcsStatus dbcs_engine_new(enum DbcsDesign design,
                                enum DbcsBoundary boundary,
                                uint8_t proxy,
                                double alpha,
                                double eta,
                                double m_bound,
                                double rho,
                                struct DbcsEngine **out);

/**
 * Destroy an engine. Null is a no-op.
 *
 * # Safety
 * `engine` must be null or a pointer returned by `dbcs_engine_new` that has
 * not been freed yet.
 */
void dbcs_engine_free(struct DbcsEngine *engine);

/**
 * Fold one step (one record, or one record per unit for the panel design)
 * and write the resulting band.
 *
 * # Safety
 * `engine` must be a live engine, `records` must point to `len` valid
 * observations, `out_band` must be writable (or null to skip the band).
 */
enum DbcsStatus dbcs_engine_step(struct DbcsEngine *engine,
                                 const struct DbcsObservation *records,
                                 uintptr_t len,
                                 struct DbcsBand *out_band);

/**
 * Write the current band without folding anything.
 *
 * # Safety
 * `engine` must be a live engine and `out_band` writable.
 */
enum DbcsStatus dbcs_engine_band(struct DbcsEngine *engine, struct DbcsBand *out_band);

/**
 * Number of folded steps.
 *
 * # Safety
 * `engine` must be a live engine.
 */
uint64_t dbcs_engine_n_steps(const struct DbcsEngine *engine);

/**
 * Whether the current band contains `tau` (1) or not (0), via `out`.
 *
 * # Safety
 * `engine` must be a live engine and `out` writable.
 */
enum DbcsStatus dbcs_engine_covers(struct DbcsEngine *engine, double tau, uint8_t *out);

/**
 * Serialize the engine state as a JSON checkpoint. Free the returned string
 * with `dbcs_string_free`.
 *
 * # Safety
 * `engine` must be a live engine and `out` writable.
 */
enum DbcsStatus dbcs_engine_snapshot_json(struct DbcsEngine *engine, char **out);

/**
 * Replace the engine state from a JSON checkpoint produced by
 * `dbcs_engine_snapshot_json` under the same engine configuration.
 *
 * # Safety
 * `engine` must be a live engine and `json` a valid NUL-terminated string.
 */
enum DbcsStatus dbcs_engine_restore_json(struct DbcsEngine *engine, const char *json);

/**
 * Free a string returned by this library. Null is a no-op.
 *
 * # Safety
 * `s` must be null or a string returned by this library, freed once.
 */
void dbcs_string_free(char *s);

/**
 * Copy the last error message into `buf` (truncated, always NUL-terminated).
 * Returns the untruncated length in bytes, excluding the NUL.
 *
 * # Safety
 * `engine` must be a live engine; `buf` must hold `cap` writable bytes.
 */
uintptr_t dbcs_engine_last_error(const struct DbcsEngine *engine, char *buf, uintptr_t cap);

/**
 * Mixture scale minimizing the width proxy at step `t_star`; writes through
 * `out`.
 *
 * # Safety
 * `out` must be writable.
 */
enum DbcsStatus dbcs_tune_eta(double alpha, uint64_t t_star, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DBCS_H */
