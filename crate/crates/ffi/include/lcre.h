/* SPDX-License-Identifier: Apache-2.0 */

#ifndef LCRE_H
#define LCRE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes; the first five match the command-line exit codes.
typedef enum LcreStatus {
  // Affirmative result.
  LCRE_STATUS_OK = 0,
  // Negative result or witness found.
  LCRE_STATUS_NEGATIVE = 1,
  // Undecided or bound exhausted.
  LCRE_STATUS_UNKNOWN = 2,
  // Malformed input.
  LCRE_STATUS_INPUT_ERROR = 3,
  // The constraint oracle failed.
  LCRE_STATUS_ORACLE_ERROR = 4,
  // A required pointer was null.
  LCRE_STATUS_NULL_POINTER = 5,
  // An internal error was caught at the boundary.
  LCRE_STATUS_INTERNAL = 6,
} LcreStatus;

// A parsed theory with its validity oracle.
typedef struct LcreTheory LcreTheory;

// Message describing the most recent failure on this thread. The pointer is
// valid until the next call into the library from the same thread.
const char *lcre_last_error(void);

// Library version as a static string.
const char *lcre_version(void);

// Releases a string returned through an out-pointer.
//
// # Safety
// `s` must be null or a string produced by this library, released once.
void lcre_string_free(char *s);

// Parses theory text into a new handle.
//
// # Safety
// `source` must be a NUL-terminated string; `out` must be writable.
enum LcreStatus lcre_theory_parse(const char *source, struct LcreTheory **out);

// Releases a theory handle.
//
// # Safety
// `t` must be null or a handle from [`lcre_theory_parse`], released once.
void lcre_theory_free(struct LcreTheory *t);

// Number of equations in the theory.
//
// # Safety
// `t` must be null or a live handle.
size_t lcre_theory_equation_count(const struct LcreTheory *t);

// Searches for a conversion between two terms within `bound` rule steps.
// Returns `Ok` and writes the trace, or `Unknown` when none is found.
//
// # Safety
// String arguments must be NUL-terminated; `trace_out` may be null.
enum LcreStatus lcre_convert(const struct LcreTheory *t,
                             const char *lhs,
                             const char *rhs,
                             uint32_t bound,
                             char **trace_out);

// Checks validity of a goal given as `[(pi ...)] [(constraint φ)] L R`.
// `Ok` for proved or sample-confirmed goals, `Negative` when an instance has
// no conversion, `Unknown` otherwise. The status label is written out.
//
// # Safety
// `goal` must be NUL-terminated; `label_out` may be null.
enum LcreStatus lcre_validate(const struct LcreTheory *t, const char *goal, char **label_out);

// Checks a derivation. `Ok` if accepted, `Negative` if rejected, `Unknown`
// if the oracle could not decide a side condition; the report is written out.
//
// # Safety
// `proof` must be NUL-terminated; `report_out` may be null.
enum LcreStatus lcre_check_proof(const struct LcreTheory *t, const char *proof, char **report_out);

// Builds a derivation for a goal; `Unknown` when none is found.
//
// # Safety
// `goal` must be NUL-terminated; `proof_out` may be null.
enum LcreStatus lcre_prove(const struct LcreTheory *t, const char *goal, char **proof_out);

// Value-consistency search to `depth` rule steps. `Ok` when no two values
// were found convertible, `Negative` with the pair written out otherwise.
//
// # Safety
// `witness_out` may be null.
enum LcreStatus lcre_consistent(const struct LcreTheory *t, uint32_t depth, char **witness_out);

// Counter-model search over a finite underlying model. `Ok` with the algebra
// written out, `Unknown` when the bounds are exhausted.
//
// # Safety
// `goal` must be NUL-terminated; `algebra_out` may be null.
enum LcreStatus lcre_refute(const struct LcreTheory *t,
                            const char *goal,
                            uint32_t extra,
                            uint32_t term_card,
                            char **algebra_out);

#endif  /* LCRE_H */
