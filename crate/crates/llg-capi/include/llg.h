#ifndef LLG_CAPI_H
#define LLG_CAPI_H

/* Generated by cbindgen from the llg-capi crate. Do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call. Non-zero codes leave a description
 * retrievable with [`llg_last_error_message`].
 */
typedef enum LlgStatus {
  /**
   * The call succeeded.
   */
  LLG_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  LLG_STATUS_NULL_ARGUMENT = 1,
  /**
   * Arguments were structurally valid but semantically rejected.
   */
  LLG_STATUS_INVALID_ARGUMENT = 2,
  /**
   * The computation itself failed (diverged run, failed solve).
   */
  LLG_STATUS_NUMERICAL_FAILURE = 3,
  /**
   * A panic was caught at the boundary; state may be stale but memory is
   * intact.
   */
  LLG_STATUS_PANIC = 4,
} LlgStatus;

/**
 * Which right-hand side the integrator advances.
 */
typedef enum LlgModel {
  /**
   * Full model: precession, damping, and the diffusion split.
   */
  LLG_MODEL_FULL = 0,
  /**
   * Damping-limit model with the averaged gradient term.
   */
  LLG_MODEL_DAMPING_ONLY = 1,
  /**
   * Heat flow only; the explicit part is identically zero.
   */
  LLG_MODEL_PURE_DIFFUSION = 2,
} LlgModel;

/**
 * Opaque magnetization field handle.
 */
typedef struct LlgField LlgField;

/**
 * Pointwise vector function of space and time supplied by the caller:
 * `f(pos, t, out, user_data)` writes three doubles to `out`. Callbacks run
 * on the thread that called [`llg_integrate`] and must not unwind.
 */
typedef void (*LlgSpaceTimeFn)(const double *pos, double t, double *out, void *user_data);

/**
 * Model selection and coefficients for [`llg_integrate`]. Null callbacks
 * mean the corresponding term is zero.
 */
typedef struct LlgModelParams {
  enum LlgModel model;
  /**
   * Damping coefficient α ≥ 0.
   */
  double alpha;
  /**
   * Artificial diffusion coefficient β > 0.
   */
  double beta;
  /**
   * Exchange coefficient ε ≥ 0.
   */
  double epsilon;
  /**
   * Applied field f(x, t), or null for none.
   */
  LlgSpaceTimeFn applied_field;
  void *applied_field_data;
  /**
   * Forcing term g(x, t), or null for none.
   */
  LlgSpaceTimeFn source;
  void *source_data;
} LlgModelParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string; never null, never
 * freed by the caller.
 */
const char *llg_version(void);

/**
 * Copies the description of the most recent failure on this thread into
 * `buf` (NUL-terminated, truncated to `cap` bytes) and returns the full
 * message length excluding the NUL. Passing a null `buf` or zero `cap`
 * just queries the length.
 *
 * # Safety
 * `buf` must be null or point to at least `cap` writable bytes.
 */
size_t llg_last_error_message(char *buf, size_t cap);

/**
 * Creates a zero field on the cell-centered unit-domain grid with `n` cells
 * per axis in `dim` dimensions (`dim` must be 1 or 3, `n` at least 2) and
 * stores the handle in `*out`.
 *
 * # Safety
 * `out` must point to writable storage for one pointer. The returned handle
 * must be released with [`llg_field_destroy`].
 */
enum LlgStatus llg_field_create(uint32_t dim, uint32_t n, struct LlgField **out);

/**
 * Releases a field handle. A null handle is a no-op.
 *
 * # Safety
 * `field` must be a handle from [`llg_field_create`] that has not been
 * destroyed already.
 */
void llg_field_destroy(struct LlgField *field);

/**
 * Number of interior cells of the field's grid, or 0 for a null handle.
 *
 * # Safety
 * `field` must be null or a live handle.
 */
size_t llg_field_cells(const struct LlgField *field);

/**
 * Fills the interior with seeded uniform noise on [−1, 1) per component and
 * mirrors the ghost layers. The same seed always produces the same field.
 *
 * # Safety
 * `field` must be a live handle.
 */
enum LlgStatus llg_field_fill_random(struct LlgField *field, uint64_t seed);

/**
 * Sets every interior cell to the vector `value` (three doubles) and
 * mirrors the ghost layers.
 *
 * # Safety
 * `field` must be a live handle and `value` must point to three doubles.
 */
enum LlgStatus llg_field_fill_constant(struct LlgField *field, const double *value);

/**
 * Copies the interior into `data` as consecutive (m₀, m₁, m₂) triples in
 * canonical cell order. `len` must be exactly 3 × cell count.
 *
 * # Safety
 * `field` must be a live handle; `data` must point to `len` writable
 * doubles.
 */
enum LlgStatus llg_field_copy_interior(const struct LlgField *field, double *data, size_t len);

/**
 * Overwrites the interior from consecutive (m₀, m₁, m₂) triples in
 * canonical cell order and mirrors the ghost layers. `len` must be exactly
 * 3 × cell count and every value must be finite.
 *
 * # Safety
 * `field` must be a live handle; `data` must point to `len` readable
 * doubles.
 */
enum LlgStatus llg_field_set_interior(struct LlgField *field, const double *data, size_t len);

/**
 * Writes the discrete ℓ², ℓ∞, and H¹ norms of the field into any non-null
 * output pointers.
 *
 * # Safety
 * `field` must be a live handle; each output must be null or point to one
 * writable double.
 */
enum LlgStatus llg_field_norms(const struct LlgField *field, double *l2, double *linf, double *h1);

/**
 * Solves the implicit stage system (I − σ Δ_h) u = rhs with homogeneous
 * Neumann boundaries, writing u into `out`. The two fields must share a
 * grid and σ must be nonnegative and finite.
 *
 * # Safety
 * `rhs` and `out` must be distinct live handles.
 */
enum LlgStatus llg_helmholtz_solve(const struct LlgField *rhs, double sigma, struct LlgField *out);

/**
 * Advances `state` in place from `t0` to `t_final` with steps as close to
 * `dt` as an integer step count allows. Callbacks in `params` are invoked
 * on the calling thread only.
 *
 * # Safety
 * `params` must point to a valid parameter struct, `state` must be a live
 * handle, and any non-null callback must be callable with the documented
 * signature for the duration of this call and must not unwind.
 */
enum LlgStatus llg_integrate(const struct LlgModelParams *params,
                             struct LlgField *state,
                             double t0,
                             double t_final,
                             double dt);

/**
 * Runs the built-in manufactured-solution problem for `dim` ∈ {1, 3} on an
 * n-cell grid from t = 0 to `t_final` and writes the (ℓ∞, ℓ², H¹) errors
 * against the closed-form solution into `out_errors`.
 *
 * # Safety
 * `out_errors` must point to three writable doubles.
 */
enum LlgStatus llg_manufactured_errors(uint32_t dim,
                                       double alpha,
                                       double beta,
                                       double epsilon,
                                       uint32_t n,
                                       double t_final,
                                       double dt,
                                       double *out_errors);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LLG_CAPI_H */
