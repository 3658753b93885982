#ifndef CTRLSYNTH_H
#define CTRLSYNTH_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CsStatus {
  CS_STATUS_OK = 0,
  CS_STATUS_NULL_POINTER = 1,
  CS_STATUS_INVALID_UTF8 = 2,
  CS_STATUS_CONFIG = 3,
  CS_STATUS_PARSE = 4,
  CS_STATUS_INTERNAL = 5,
} CsStatus;

/**
 * A validated design problem.
 */
typedef struct CsProblem CsProblem;

/**
 * A finished design session.
 */
typedef struct CsSession CsSession;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *cs_version(void);

/**
 * Copy of the calling thread's last error message, or NULL if the last
 * call succeeded. Free with [`cs_string_free`].
 */
char *cs_last_error_message(void);

/**
 * # Safety
 * `s` must be NULL or a string returned by this library, not yet freed.
 */
void cs_string_free(char *s);

/**
 * Parses a TOML run configuration into a problem handle.
 *
 * # Safety
 * `config_toml` must be a NUL-terminated string and `out` a writable pointer.
 */
enum CsStatus cs_problem_from_toml(const char *config_toml, struct CsProblem **out);

/**
 * # Safety
 * `problem` must be NULL or a handle from [`cs_problem_from_toml`], not yet freed.
 */
void cs_problem_free(struct CsProblem *problem);

/**
 * Runs a full design session. Blocks until it terminates.
 *
 * # Safety
 * `problem` must be a live problem handle and `out` a writable pointer.
 */
enum CsStatus cs_session_run(const struct CsProblem *problem, struct CsSession **out);

/**
 * # Safety
 * `session` must be NULL or a handle from [`cs_session_run`], not yet freed.
 */
void cs_session_free(struct CsSession *session);

/**
 * 1 if the session ended with every specification met, 0 otherwise or on NULL.
 *
 * # Safety
 * `session` must be NULL or a live session handle.
 */
int32_t cs_session_specs_met(const struct CsSession *session);

/**
 * Number of outer iterations, 0 on NULL.
 *
 * # Safety
 * `session` must be NULL or a live session handle.
 */
size_t cs_session_iterations(const struct CsSession *session);

/**
 * Performance index of the best design, NaN on NULL.
 *
 * # Safety
 * `session` must be NULL or a live session handle.
 */
double cs_session_best_j(const struct CsSession *session);

/**
 * Session log as JSON. Free with [`cs_string_free`]; NULL on NULL input.
 *
 * # Safety
 * `session` must be NULL or a live session handle.
 */
char *cs_session_log_json(const struct CsSession *session);

/**
 * Markdown report. Free with [`cs_string_free`]; NULL on NULL input.
 *
 * # Safety
 * `session` must be NULL or a live session handle.
 */
char *cs_session_report(const struct CsSession *session);

/**
 * Simulates a structure document at fixed parameters and writes the
 * feedback document (metrics, index, flags) as JSON to `out_json`.
 *
 * # Safety
 * `problem` must be a live problem handle, `structure_json` NUL-terminated,
 * `theta` valid for `theta_len` reads (or NULL when `theta_len` is 0), and
 * `out_json` writable.
 */
enum CsStatus cs_simulate(const struct CsProblem *problem,
                          const char *structure_json,
                          const double *theta,
                          size_t theta_len,
                          char **out_json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CTRLSYNTH_H */
