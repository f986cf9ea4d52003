#ifndef URNLAB_H
#define URNLAB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum UrnStatus {
  URN_STATUS_OK = 0,
  URN_STATUS_NULL_POINTER = 1,
  URN_STATUS_INVALID_ARGUMENT = 2,
  URN_STATUS_DEGENERATE_RULE = 3,
  URN_STATUS_MODEL_CONTRACT = 4,
  URN_STATUS_MISSING_SHAPE_DATA = 5,
  URN_STATUS_OUT_OF_SCOPE = 6,
  URN_STATUS_REGIME_MISMATCH = 7,
  URN_STATUS_BUFFER_TOO_SMALL = 8,
  URN_STATUS_PANIC = 9,
  URN_STATUS_INTERNAL = 10,
} UrnStatus;

typedef enum UrnModelKind {
  /**
   * `D = I_d`; `p` is ignored.
   */
  URN_MODEL_KIND_IDENTITY = 0,
  /**
   * Adaptive allocation with success probabilities `p`.
   */
  URN_MODEL_KIND_FINANCE = 1,
  /**
   * Deterministic `H` built from `p`.
   */
  URN_MODEL_KIND_BALANCED = 2,
} UrnModelKind;

typedef enum UrnStability {
  URN_STABILITY_ATTRACTIVE = 0,
  URN_STABILITY_REPULSIVE = 1,
  URN_STABILITY_DEGENERATE = 2,
  URN_STABILITY_UNCLASSIFIED = 3,
} UrnStability;

/**
 * Opaque urn with its own random stream.
 */
typedef struct UrnHandle UrnHandle;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or NULL. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *urnlab_last_error(void);

/**
 * Creates an urn with the reinforced-frequency rule.
 *
 * # Safety
 * `y0` points to `d` doubles, `p` to `d` doubles unless `model` is
 * `Identity`, `f_spec` is a NUL-terminated string and `out` is writable.
 */
enum UrnStatus urnlab_urn_new(const double *y0,
                              size_t d,
                              const char *f_spec,
                              enum UrnModelKind model,
                              const double *p,
                              uint64_t seed,
                              struct UrnHandle **out);

/**
 * Advances `steps` draws. `last_drawn` (nullable) receives the zero-based
 * colour of the final draw.
 *
 * # Safety
 * `urn` comes from [`urnlab_urn_new`] and has not been freed.
 */
enum UrnStatus urnlab_urn_advance(struct UrnHandle *urn, uint64_t steps, size_t *last_drawn);

/**
 * Writes `Ỹ_n` into `out[0..len]`; `len` must equal the number of colours.
 *
 * # Safety
 * `urn` is live and `out` points to `len` writable doubles.
 */
enum UrnStatus urnlab_urn_normalized(const struct UrnHandle *urn, double *out, size_t len);

/**
 * Number of draws so far.
 *
 * # Safety
 * `urn` is live and `out` is writable.
 */
enum UrnStatus urnlab_urn_steps(const struct UrnHandle *urn, uint64_t *out);

/**
 * # Safety
 * `urn` is NULL or a live handle; it must not be used afterwards.
 */
void urnlab_urn_free(struct UrnHandle *urn);

/**
 * Two-colour equilibria: first coordinates into `roots`, labels into
 * `stability`, count into `count`. Fails with `BUFFER_TOO_SMALL` (and still
 * sets `count`) when `cap` is short.
 *
 * # Safety
 * `roots` and `stability` point to `cap` writable slots; `count` is writable.
 */
enum UrnStatus urnlab_equilibria_2d(const char *f_spec,
                                    double p1,
                                    double p2,
                                    double *roots,
                                    enum UrnStability *stability,
                                    size_t cap,
                                    size_t *count);

/**
 * `λ` at the two-colour root `y_star1`.
 *
 * # Safety
 * `f_spec` is a NUL-terminated string and `out` is writable.
 */
enum UrnStatus urnlab_second_eigenvalue(const char *f_spec,
                                        double p1,
                                        double p2,
                                        double y_star1,
                                        double *out);

/**
 * `E[X^k]` for `X ~ Beta(a, b)`.
 *
 * # Safety
 * `out` is writable.
 */
enum UrnStatus urnlab_beta_moment(uint32_t k, double a, double b, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* URNLAB_H */
