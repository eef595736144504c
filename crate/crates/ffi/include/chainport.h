#ifndef CHAINPORT_H
#define CHAINPORT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CpEndLink {
  CP_END_LINK_Z = 0,
  CP_END_LINK_X = 1,
  CP_END_LINK_Y = 2,
  CP_END_LINK_AUTO = 3,
} CpEndLink;

typedef enum CpFamily {
  CP_FAMILY_TWO_WAY_VAA = 0,
  CP_FAMILY_CHAIN = 1,
} CpFamily;

typedef enum CpMode {
  CP_MODE_FULL = 0,
  CP_MODE_COMPACT = 1,
} CpMode;

/**
 * Status codes returned by every fallible function.
 */
typedef enum CpStatus {
  CP_STATUS_OK = 0,
  CP_STATUS_NULL_POINTER = 1,
  CP_STATUS_INVALID_ARGUMENT = 2,
  CP_STATUS_SIZE_LIMIT = 3,
  CP_STATUS_NO_CORRECTION = 4,
  CP_STATUS_VALIDATION_FAILED = 5,
  CP_STATUS_PARSE = 6,
  CP_STATUS_IO = 7,
  CP_STATUS_INTERNAL = 99,
} CpStatus;

/**
 * Opaque protocol configuration.
 */
typedef struct CpSpec CpSpec;

/**
 * Opaque correction table.
 */
typedef struct CpTable CpTable;

/**
 * Scalar results of one sampled trial.
 */
typedef struct CpTrialSummary {
  /**
   * Probability of the observed readout combination.
   */
  double prob;
  double fidelity_before;
  /**
   * Valid only when `corrected` is nonzero.
   */
  double fidelity_after;
  uint8_t corrected;
} CpTrialSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the last failure on this thread, or NULL.
 */
const char *cp_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *cp_version(void);

/**
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum CpStatus cp_spec_new(size_t n,
                          enum CpFamily family,
                          enum CpEndLink end_link,
                          enum CpMode mode,
                          struct CpSpec **out);

/**
 * # Safety
 * `spec` must be NULL or a handle from `cp_spec_new` not yet freed.
 */
void cp_spec_free(struct CpSpec *spec);

/**
 * Number of spin sites of the configuration, 0 for NULL.
 *
 * # Safety
 * `spec` must be NULL or a live handle.
 */
size_t cp_spec_sites(const struct CpSpec *spec);

/**
 * Derives the Pauli correction table for `spec`.
 *
 * # Safety
 * `spec` must be a live handle and `out` writable.
 */
enum CpStatus cp_table_derive(const struct CpSpec *spec, struct CpTable **out);

/**
 * Parses a correction table from its JSON text.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` writable.
 */
enum CpStatus cp_table_from_json(const char *json, struct CpTable **out);

/**
 * Serializes a table to JSON; release the string with `cp_string_free`.
 *
 * # Safety
 * `table` must be a live handle and `out` writable.
 */
enum CpStatus cp_table_to_json(const struct CpTable *table, char **out);

/**
 * Number of entries in the table, 0 for NULL.
 *
 * # Safety
 * `table` must be NULL or a live handle.
 */
size_t cp_table_len(const struct CpTable *table);

/**
 * Looks up the correction for difference vector `d` of length `n`.
 * Writes one ASCII label ('I', 'X', 'Y' or 'Z') per site into `labels`,
 * which must hold `n` bytes.
 *
 * # Safety
 * `d` and `labels` must point to `n` readable and writable bytes.
 */
enum CpStatus cp_table_lookup(const struct CpTable *table,
                              const uint8_t *d,
                              size_t n,
                              uint8_t *labels);

/**
 * # Safety
 * `table` must be NULL or a live handle.
 */
void cp_table_free(struct CpTable *table);

/**
 * # Safety
 * `s` must be NULL or a string returned by this library, not yet freed.
 */
void cp_string_free(char *s);

/**
 * Runs one sampled trial on a product input.
 *
 * `amplitudes` holds `4 * n` doubles, `re0 im0 re1 im1` per site, where `n`
 * is the site count of `spec`; each site is renormalized. `table` may be
 * NULL, in which case no correction is applied. The observed difference
 * vector is written to `differences` (`n` bytes) when it is not NULL.
 *
 * # Safety
 * All non-NULL pointers must be valid for the sizes above.
 */
enum CpStatus cp_run_trial(const struct CpSpec *spec,
                           const struct CpTable *table,
                           const double *amplitudes,
                           uint64_t seed,
                           uint8_t *differences,
                           struct CpTrialSummary *out);

/**
 * Channel fidelity between the all-zero-difference branch operator and the
 * cyclic spin permutation.
 *
 * # Safety
 * `spec` must be a live handle and `out` writable.
 */
enum CpStatus cp_zero_branch_fidelity(const struct CpSpec *spec, double *out);

/**
 * Sets `*out` to 1 if every reachable difference is in {0, 2}, else 0.
 *
 * # Safety
 * `amplitudes` as for `cp_run_trial`; `out` writable.
 */
enum CpStatus cp_check_outcome_support(const struct CpSpec *spec,
                                       const double *amplitudes,
                                       uint8_t *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CHAINPORT_H */
