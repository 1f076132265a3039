#ifndef TEP_JCC_H
#define TEP_JCC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum TjScheme {
  TJ_SCHEME_SLA = 0,
  TJ_SCHEME_LA = 1,
  TJ_SCHEME_SFLA = 2,
  TJ_SCHEME_WCVAR = 3,
  TJ_SCHEME_EXACT = 4,
} TjScheme;

typedef enum TjStatus {
  TJ_STATUS_OK = 0,
  TJ_STATUS_NULL_POINTER = 1,
  TJ_STATUS_INVALID_INPUT = 2,
  TJ_STATUS_INFEASIBLE = 3,
  TJ_STATUS_BACKEND = 4,
  TJ_STATUS_BUFFER_TOO_SMALL = 5,
  TJ_STATUS_PANIC = 6,
} TjStatus;

/**
 * A case with its network and candidate configurations.
 */
typedef struct TjCase TjCase;

/**
 * A linear program with one chance-constrained block.
 */
typedef struct TjJcc TjJcc;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread; empty after success.
 * The pointer stays valid until the next call on the same thread.
 */
const char *tj_last_error(void);

/**
 * # Safety
 * `s` must be null or a string returned by this library.
 */
void tj_string_free(char *s);

/**
 * Seeded Garver 6-bus case over `years` planning years.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum TjStatus tj_case_garver(uint64_t seed, size_t years, struct TjCase **out);

/**
 * # Safety
 * `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum TjStatus tj_case_from_json(const char *json, struct TjCase **out);

/**
 * # Safety
 * `case` must be a live handle and `out` a valid pointer.
 */
enum TjStatus tj_case_to_json(const struct TjCase *case_, char **out);

/**
 * # Safety
 * `case` must be null or a handle from this library, released once.
 */
void tj_case_free(struct TjCase *case_);

/**
 * Bus, line and configuration counts.
 *
 * # Safety
 * `case` must be a live handle; the output pointers must be valid.
 */
enum TjStatus tj_case_dims(const struct TjCase *case_,
                           size_t *buses,
                           size_t *lines,
                           size_t *configurations);

/**
 * Writes the PTDF of configuration `config` row-major (`lines x buses`).
 * Fails with `BufferTooSmall` when `len` is short; `needed` receives the size
 * either way.
 *
 * # Safety
 * `case` must be a live handle, `out` must hold `len` doubles and `needed`
 * must be valid.
 */
enum TjStatus tj_case_ptdf(const struct TjCase *case_,
                           size_t config,
                           double *out,
                           size_t len,
                           size_t *needed);

/**
 * Value-at-risk style quantile of `values` at risk level `eps`.
 *
 * # Safety
 * `values` must hold `n` doubles and `out` must be valid.
 */
enum TjStatus tj_compute_q(const double *values, size_t n, double eps, double *out);

/**
 * Parses a chance-constrained LP from its JSON form.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum TjStatus tj_jcc_from_json(const char *json, struct TjJcc **out);

/**
 * Decision dimension of the problem.
 *
 * # Safety
 * `jcc` must be a live handle and `out` a valid pointer.
 */
enum TjStatus tj_jcc_dim(const struct TjJcc *jcc, size_t *out);

/**
 * Solves the problem under `scheme` with unit sample weights (optimal row
 * weights for `Wcvar`). `big_m` is used by `Exact` only. Writes the
 * objective and, when `x_len` suffices, the optimal decision.
 *
 * # Safety
 * `jcc` must be a live handle, `objective` must be valid and `x` must hold
 * `x_len` doubles.
 */
enum TjStatus tj_jcc_solve(const struct TjJcc *jcc,
                           enum TjScheme scheme,
                           double big_m,
                           double *objective,
                           double *x,
                           size_t x_len);

/**
 * # Safety
 * `jcc` must be null or a handle from this library, released once.
 */
void tj_jcc_free(struct TjJcc *jcc);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TEP_JCC_H */
