#ifndef RSHE_H
#define RSHE_H

/* Generated with cbindgen:0.29.4 */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RsheStatus {
  RSHE_STATUS_OK = 0,
  RSHE_STATUS_INVALID_INPUT = 1,
  RSHE_STATUS_INVALID_PARAMETER = 2,
  RSHE_STATUS_CONFIG = 3,
  RSHE_STATUS_BLOW_UP = 4,
  RSHE_STATUS_IO = 5,
  RSHE_STATUS_NULL_POINTER = 6,
  RSHE_STATUS_BUFFER_TOO_SMALL = 7,
  RSHE_STATUS_PANIC = 8,
  RSHE_STATUS_OTHER = 9,
} RsheStatus;

// Opaque simulator: one replica of the configured `simulate` run.
typedef struct RsheSimulator RsheSimulator;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copies the calling thread's last error message (NUL terminated,
// truncated to `len - 1` bytes) into `buf`. Returns the full message length
// in bytes, excluding the terminator.
//
// # Safety
// `buf` must be null or valid for `len` bytes of writes.
uintptr_t rshe_last_error_message(char *buf, uintptr_t len);

// Builds a simulator from TOML configuration text (same schema as the
// command-line tool; relative paths resolve against the working
// directory) and a base seed. The initial field is rearranged once.
//
// # Safety
// `config_toml` must be null or a NUL-terminated string; `out` must be null
// or valid for one pointer write.
enum RsheStatus rshe_simulator_new(const char *config_toml,
                                   uint64_t seed,
                                   struct RsheSimulator **out);

// Releases a simulator. Null is ignored.
//
// # Safety
// `sim` must be null or a handle from [`rshe_simulator_new`] not yet freed.
void rshe_simulator_free(struct RsheSimulator *sim);

// Advances by `n_steps` time steps.
//
// # Safety
// `sim` must be null or a live handle.
enum RsheStatus rshe_simulator_step(struct RsheSimulator *sim, uint64_t n_steps);

// Grid size `N`, or 0 for a null handle.
//
// # Safety
// `sim` must be null or a live handle.
uintptr_t rshe_simulator_n_points(const struct RsheSimulator *sim);

// Current time, or NaN for a null handle.
//
// # Safety
// `sim` must be null or a live handle.
double rshe_simulator_time(const struct RsheSimulator *sim);

// Cumulative rearrangement displacement, or NaN for a null handle.
//
// # Safety
// `sim` must be null or a live handle.
double rshe_simulator_reflection(const struct RsheSimulator *sim);

// Copies the current field (storage order `j = -N/2+1, ..., N/2`) into
// `out`, which must hold at least `N` values.
//
// # Safety
// `sim` must be null or a live handle; `out` must be null or valid for
// `len` writes.
enum RsheStatus rshe_simulator_field(const struct RsheSimulator *sim, double *out, uintptr_t len);

// Symmetric non-increasing rearrangement of `n` values in storage order.
// `values` and `out` may alias.
//
// # Safety
// `values` must be valid for `n` reads and `out` for `n` writes.
enum RsheStatus rshe_rearrange(const double *values, double *out, uintptr_t n);

// Wasserstein-2 distance between the value laws of two fields of size `n`.
//
// # Safety
// `u` and `v` must be valid for `n` reads; `out` for one write.
enum RsheStatus rshe_w2(const double *u, const double *v, uintptr_t n, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RSHE_H */
