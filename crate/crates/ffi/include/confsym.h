#ifndef CONFSYM_H
#define CONFSYM_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes.
typedef enum ConfsymStatus {
  CONFSYM_STATUS_OK = 0,
  CONFSYM_STATUS_NULL_POINTER = 1,
  CONFSYM_STATUS_INVALID_UTF8 = 2,
  CONFSYM_STATUS_BUFFER_TOO_SMALL = 3,
  CONFSYM_STATUS_INVALID_INPUT = 10,
  CONFSYM_STATUS_INVALID_PARAMETER = 11,
  CONFSYM_STATUS_DOMAIN = 12,
  CONFSYM_STATUS_JACOBIAN = 13,
  CONFSYM_STATUS_QUADRATURE = 14,
  CONFSYM_STATUS_DIVERGENCE = 15,
  CONFSYM_STATUS_DEGENERATE_SAMPLING = 16,
  CONFSYM_STATUS_DEGENERATE_EMBEDDING = 17,
  CONFSYM_STATUS_TOPOLOGY = 18,
  CONFSYM_STATUS_NO_FIXED_CLASS = 19,
  CONFSYM_STATUS_NOT_APPLICABLE = 20,
  CONFSYM_STATUS_NO_INTERSECTION = 21,
  CONFSYM_STATUS_USAGE = 22,
  CONFSYM_STATUS_IO = 23,
  CONFSYM_STATUS_PANIC = 99,
} ConfsymStatus;

// Result of an experiment run.
typedef struct ConfsymReport ConfsymReport;

// A catalog system as a map: discrete maps as they are, flows through their time-`t` map.
typedef struct ConfsymSystem ConfsymSystem;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copies the calling thread's last error message into `buf`. Leaves the
// message in place, so a size query with a null buffer can be followed by a copy.
//
// # Safety
// `buf` must be valid for `len` bytes or null; `needed` null or writable.
enum ConfsymStatus confsym_last_error(char *buf, size_t len, size_t *needed);

// Library version as a static NUL-terminated string.
const char *confsym_version(void);

// Builds a catalog system by name. `settings` takes the keys of the
// `conformality` experiment (`a`, `c`, `alpha`, `field`, `t`, `dt`, `method`, ...).
//
// # Safety
// `name` must be a NUL-terminated string, `settings` one or null, `out` writable.
enum ConfsymStatus confsym_system_new(const char *name,
                                      const char *settings_text,
                                      struct ConfsymSystem **out);

// # Safety
// `sys` must come from [`confsym_system_new`] and not be used afterwards.
void confsym_system_free(struct ConfsymSystem *sys);

// Chart dimension of the system, 0 for a null handle.
//
// # Safety
// `sys` must be a live handle or null.
size_t confsym_system_dim(const struct ConfsymSystem *sys);

// 1 when the system was built from a flow, 0 for a discrete map or null.
//
// # Safety
// `sys` must be a live handle or null.
int32_t confsym_system_is_flow(const struct ConfsymSystem *sys);

// One step of the map; `x` and `out` hold `dim` values.
//
// # Safety
// `x` and `out` must be valid for `dim` doubles where `dim` is the system dimension.
enum ConfsymStatus confsym_system_step(const struct ConfsymSystem *sys,
                                       const double *x,
                                       double *out);

// Jacobian of one step at `x`, row-major into `out` (`dim × dim` values).
//
// # Safety
// `x` valid for `dim` doubles, `out` for `dim²`.
enum ConfsymStatus confsym_system_jacobian(const struct ConfsymSystem *sys,
                                           const double *x,
                                           double *out);

// Sampled estimate of `a` in `f*ω = aω` and the largest deviation from it.
//
// # Safety
// `estimate` and `max_residual` must be writable.
enum ConfsymStatus confsym_conformality_ratio(const struct ConfsymSystem *sys,
                                              size_t samples,
                                              uint64_t seed,
                                              double *estimate,
                                              double *max_residual);

// Runs an experiment by its CLI name with optional `key=value` settings.
// A run whose checks fail still succeeds here; query [`confsym_report_pass`].
//
// # Safety
// `experiment` must be a NUL-terminated string, `settings` one or null, `out` writable.
enum ConfsymStatus confsym_run(const char *experiment,
                               const char *settings_text,
                               struct ConfsymReport **out);

// 1 when every check passed, 0 otherwise or for null.
//
// # Safety
// `report` must be a live handle or null.
int32_t confsym_report_pass(const struct ConfsymReport *report);

// Number of checks in the report.
//
// # Safety
// `report` must be a live handle or null.
size_t confsym_report_check_count(const struct ConfsymReport *report);

// The report as JSON. With a null or short buffer, returns `BufferTooSmall`
// and stores the required size in `needed`.
//
// # Safety
// `buf` valid for `len` bytes or null; `needed` writable or null.
enum ConfsymStatus confsym_report_json(const struct ConfsymReport *report,
                                       char *buf,
                                       size_t len,
                                       size_t *needed);

// # Safety
// `report` must come from [`confsym_run`] and not be used afterwards.
void confsym_report_free(struct ConfsymReport *report);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CONFSYM_H */
