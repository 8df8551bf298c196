#ifndef HJHOMOG_H
#define HJHOMOG_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Which experiment [`hj_run`] performs.
 */
typedef enum HjCommand {
  HJ_COMMAND_AUDIT = 0,
  HJ_COMMAND_EFFECTIVE = 1,
  HJ_COMMAND_CONVERGE = 2,
  HJ_COMMAND_STABLE_NORM = 3,
} HjCommand;

/**
 * Result code of every fallible call.
 */
typedef enum HjStatus {
  HJ_STATUS_OK = 0,
  HJ_STATUS_NULL_POINTER = 1,
  HJ_STATUS_INVALID_ARGUMENT = 2,
  HJ_STATUS_CONFIG = 3,
  HJ_STATUS_RESONANT = 4,
  HJ_STATUS_NUMERIC = 5,
  HJ_STATUS_IO = 6,
  HJ_STATUS_AUDIT_FAILED = 7,
  HJ_STATUS_PANIC = 8,
} HjStatus;

/**
 * Parsed and validated experiment configuration.
 */
typedef struct HjConfig HjConfig;

/**
 * Effective Lagrangian table with `H_bar` attached.
 */
typedef struct HjEffectiveTable HjEffectiveTable;

/**
 * One sampled environment of a medium.
 */
typedef struct HjEnvironment HjEnvironment;

/**
 * A medium built from a config's `[medium]` block.
 */
typedef struct HjMedium HjMedium;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the calling thread's last error message into `buf` (NUL
 * terminated, truncated to `len`). Returns the full message length in bytes,
 * excluding the terminator; 0 when there is no error.
 *
 * # Safety
 * `buf` must be null or valid for `len` bytes.
 */
size_t hj_last_error(char *buf, size_t len);

/**
 * Parses a TOML experiment config from a string.
 *
 * # Safety
 * `toml` must be a NUL-terminated string; `out` must be writable.
 */
enum HjStatus hj_config_parse(const char *toml, struct HjConfig **out);

/**
 * # Safety
 * `cfg` must be null or a handle from [`hj_config_parse`], not yet freed.
 */
void hj_config_free(struct HjConfig *cfg);

/**
 * Builds the medium described by the config. A resonant quasi-periodic
 * frequency vector yields `HJ_STATUS_RESONANT`.
 *
 * # Safety
 * `cfg` must be a live config handle; `out` must be writable.
 */
enum HjStatus hj_medium_build(const struct HjConfig *cfg, struct HjMedium **out);

/**
 * Spatial dimension of the medium, or 0 for a null handle.
 *
 * # Safety
 * `medium` must be null or a live medium handle.
 */
size_t hj_medium_dim(const struct HjMedium *medium);

/**
 * # Safety
 * `medium` must be null or a live medium handle.
 */
void hj_medium_free(struct HjMedium *medium);

/**
 * Deterministically samples the environment with the given seed.
 *
 * # Safety
 * `medium` must be a live medium handle; `out` must be writable.
 */
enum HjStatus hj_environment_sample(const struct HjMedium *medium,
                                    uint64_t seed,
                                    struct HjEnvironment **out);

/**
 * # Safety
 * `env` must be null or a live environment handle.
 */
void hj_environment_free(struct HjEnvironment *env);

/**
 * `H(x, p, omega)`; `x` and `p` hold `dim` values each.
 *
 * # Safety
 * Handles must be live; `x`, `p` valid for `dim` reads; `out` writable.
 */
enum HjStatus hj_hamiltonian(const struct HjMedium *medium,
                             const struct HjEnvironment *env,
                             const double *x,
                             const double *p,
                             size_t dim,
                             double *out);

/**
 * `L(x, q, omega)`, closed form where available, numeric conjugate otherwise.
 *
 * # Safety
 * Handles must be live; `x`, `q` valid for `dim` reads; `out` writable.
 */
enum HjStatus hj_lagrangian(const struct HjMedium *medium,
                            const struct HjEnvironment *env,
                            const double *x,
                            const double *q,
                            size_t dim,
                            double *out);

/**
 * Estimates `L_bar` on the config's direction grid and `H_bar` on its
 * momentum grid, using the config's lattice, horizons and seeds.
 *
 * # Safety
 * `cfg` and `medium` must be live handles; `out` must be writable.
 */
enum HjStatus hj_effective_compute(const struct HjConfig *cfg,
                                   const struct HjMedium *medium,
                                   struct HjEffectiveTable **out);

/**
 * Number of direction grid points in the table, or 0 for a null handle.
 *
 * # Safety
 * `table` must be null or a live table handle.
 */
size_t hj_effective_len(const struct HjEffectiveTable *table);

/**
 * Copies grid point `k` (`dim` values) and its convexified `L_bar` value.
 *
 * # Safety
 * `table` must be live; `h` valid for `dim` writes; `value` writable.
 */
enum HjStatus hj_effective_point(const struct HjEffectiveTable *table,
                                 size_t k,
                                 double *h,
                                 size_t dim,
                                 double *value);

/**
 * Interpolated `L_bar(h)`; `HJ_STATUS_INVALID_ARGUMENT` outside the grid.
 *
 * # Safety
 * `table` must be live; `h` valid for `dim` reads; `out` writable.
 */
enum HjStatus hj_effective_lagrangian(const struct HjEffectiveTable *table,
                                      const double *h,
                                      size_t dim,
                                      double *out);

/**
 * `H_bar(p)` at a momentum grid point; `HJ_STATUS_INVALID_ARGUMENT` elsewhere.
 *
 * # Safety
 * `table` must be live; `p` valid for `dim` reads; `out` writable.
 */
enum HjStatus hj_effective_hamiltonian(const struct HjEffectiveTable *table,
                                       const double *p,
                                       size_t dim,
                                       double *out);

/**
 * # Safety
 * `table` must be null or a live table handle.
 */
void hj_effective_free(struct HjEffectiveTable *table);

/**
 * Runs a full experiment as the CLI would, writing artifacts to `out_dir`.
 * `cache_dir` may be null; `workers` 0 means all cores. Returns
 * `HJ_STATUS_AUDIT_FAILED` when the run completes but an audit fails.
 *
 * # Safety
 * `cfg` must be live; `out_dir` a NUL-terminated path; `cache_dir` null or
 * NUL-terminated.
 */
enum HjStatus hj_run(enum HjCommand command,
                     const struct HjConfig *cfg,
                     const char *out_dir,
                     const char *cache_dir,
                     size_t workers,
                     bool strict);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HJHOMOG_H */
