#ifndef SPARSECAP_H
#define SPARSECAP_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define SPC_OK 0

#define SPC_NULL_POINTER 1

#define SPC_INVALID_ARGUMENT 2

#define SPC_DIMENSION_MISMATCH 3

#define SPC_NON_FINITE 4

#define SPC_INTERNAL 5

/**
 * Opaque transform handle.
 */
typedef struct SpcTransform SpcTransform;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Description of the last failed call on this thread, or null if the last
 * call succeeded. Valid until the next `spc_*` call on this thread.
 */
const char *spc_last_error_message(void);

/**
 * Library version as a static nul-terminated string.
 */
const char *spc_version(void);

/**
 * Build a transform `R^input_dim -> R^output_dim`; `cap_k == output_dim`
 * disables the cap.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
int32_t spc_transform_new(size_t input_dim,
                          size_t output_dim,
                          double bernoulli_p,
                          size_t cap_k,
                          uint64_t seed,
                          SpcTransform **out);

/**
 * Release a handle. Null is ignored.
 *
 * # Safety
 * `t` must be null or a handle from `spc_transform_new` not yet freed.
 */
void spc_transform_free(SpcTransform *t);

/**
 * Input dimension, or 0 for a null handle.
 *
 * # Safety
 * `t` must be null or a live handle.
 */
size_t spc_transform_input_dim(const SpcTransform *t);

/**
 * Output dimension, or 0 for a null handle.
 *
 * # Safety
 * `t` must be null or a live handle.
 */
size_t spc_transform_output_dim(const SpcTransform *t);

/**
 * `output = c_k(M input)`.
 *
 * # Safety
 * `input` must point to `input_len` readable doubles and `output` to
 * `output_len` writable doubles; the two must not overlap.
 */
int32_t spc_transform_forward(const SpcTransform *t,
                              const double *input,
                              size_t input_len,
                              double *output,
                              size_t output_len);

/**
 * `output = M input`, without the cap.
 *
 * # Safety
 * As for `spc_transform_forward`.
 */
int32_t spc_transform_project(const SpcTransform *t,
                              const double *input,
                              size_t input_len,
                              double *output,
                              size_t output_len);

/**
 * Row-wise forward of `rows` row-major inputs of length `input_dim` into
 * `rows` outputs of length `output_dim`.
 *
 * # Safety
 * `input` must hold `rows * input_dim` doubles and `output`
 * `rows * output_dim`; they must not overlap.
 */
int32_t spc_transform_forward_batch(const SpcTransform *t,
                                    const double *input,
                                    size_t rows,
                                    double *output);

/**
 * Keep the `k` largest-magnitude entries of `x` (ties to the lower index)
 * and zero the rest; `k >= len` copies `x`. `out` has the same length as
 * `x`.
 *
 * # Safety
 * `x` and `out` must each point to `len` doubles (`out` writable).
 */
int32_t spc_cap(const double *x, size_t len, size_t k, double *out);

/**
 * `norm (k+1)^(1/2 - 1/p_norm)`, the bound on `||x - c_k(x)||_2` given
 * `norm = ||x||_{p_norm}` with `p_norm` in (0, 2).
 *
 * # Safety
 * `out` must point to one writable double.
 */
int32_t spc_cap_error_bound(double norm, size_t k, double p_norm, double *out);

/**
 * Lower bound on the probability that one pair's squared distance is
 * preserved within a factor `1 +- epsilon`.
 *
 * # Safety
 * `out` must point to one writable double.
 */
int32_t spc_jl_success_bound(double epsilon, size_t n, double p, double *out);

/**
 * Natural log of the determinant lower threshold for an `m x m` sample.
 *
 * # Safety
 * `out` must point to one writable double.
 */
int32_t spc_det_lower_threshold(size_t m, double p, double epsilon, double *out);

/**
 * Zero probability, mean and variance of one matrix entry.
 *
 * # Safety
 * Each out-pointer must point to one writable double.
 */
int32_t spc_entry_moments(double p, double *zero_prob, double *mean, double *variance);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SPARSECAP_H */
