#ifndef SG_ENERGY_H
#define SG_ENERGY_H

/* Generated by the build script; edit src/lib.rs instead. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SgeStatus {
  SGE_STATUS_OK = 0,
  // Null pointer, zero-sized buffer, or an otherwise malformed argument.
  SGE_STATUS_ARGUMENT = 1,
  // Level outside the range the requested backend supports.
  SGE_STATUS_LEVEL = 2,
  // A word symbol outside 1..=cell-count for the model's level.
  SGE_STATUS_WORD = 3,
  // Enumeration would exceed the configured leaf cap.
  SGE_STATUS_DEPTH = 4,
  // Domain error: degenerate input vector, unsupported level, and so on.
  SGE_STATUS_DOMAIN = 5,
  // A panic was caught at the language boundary.
  SGE_STATUS_PANIC = 6,
} SgeStatus;

// Opaque model handle. Create with `sge_model_new`, destroy with
// `sge_model_free`; safe to share across threads for reads.
typedef struct SgeModel SgeModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Creates a model for the given level, exact arithmetic up to the exact
// cap and floating point beyond it. Writes the handle to `out`.
//
// # Safety
// `out` must be a valid pointer to an `SgeModel*` slot.
enum SgeStatus sge_model_new(uint32_t level, struct SgeModel **out);

// Creates a model on the float backend regardless of level.
//
// # Safety
// `out` must be a valid pointer to an `SgeModel*` slot.
enum SgeStatus sge_model_new_float(uint32_t level, struct SgeModel **out);

// Destroys a handle; a null pointer is a no-op.
//
// # Safety
// `model` must be null or a pointer returned by a constructor and not
// already freed.
void sge_model_free(struct SgeModel *model);

// # Safety
// `model` must be a live handle.
uint32_t sge_level(const struct SgeModel *model);

// Number of cells, which is also the number of word symbols.
//
// # Safety
// `model` must be a live handle.
uint32_t sge_num_symbols(const struct SgeModel *model);

// Energy renormalization factor r.
//
// # Safety
// `model` must be a live handle.
double sge_renormalization_factor(const struct SgeModel *model);

// 1 when the model was built with exact arithmetic, 0 otherwise.
//
// # Safety
// `model` must be a live handle.
int32_t sge_backend_is_exact(const struct SgeModel *model);

// Coefficient readout for one word: writes a_j into `out_a` and the
// normalized b_j into `out_b`. Either output may be null to skip it.
//
// # Safety
// `model` must be a live handle, `word` valid for `len` entries (or null
// with `len == 0`), and the non-null outputs valid for three doubles.
enum SgeStatus sge_coeffs(const struct SgeModel *model,
                          const uint16_t *word,
                          uintptr_t len,
                          double *out_a,
                          double *out_b);

// Polar position of the word's coefficient vector: distance from the
// barycenter and angle in (-pi, pi].
//
// # Safety
// `model` must be a live handle, `word` valid for `len` entries (or null
// with `len == 0`), and non-null outputs valid for one double each.
enum SgeStatus sge_polar(const struct SgeModel *model,
                         const uint16_t *word,
                         uintptr_t len,
                         double *out_radius,
                         double *out_theta);

// Energy of the harmonic function with boundary values `f` on the cell of
// the given word.
//
// # Safety
// `model` must be a live handle, `word` valid for `len` entries (or null
// with `len == 0`), `f` valid for three doubles, `out` for one.
enum SgeStatus sge_cell_energy(const struct SgeModel *model,
                               const uint16_t *word,
                               uintptr_t len,
                               const double *f,
                               double *out);

// Weight nu(K_w) of the word's cell under the reference energy measure.
//
// # Safety
// `model` must be a live handle, `word` valid for `len` entries (or null
// with `len == 0`), `out` for one double.
enum SgeStatus sge_nu(const struct SgeModel *model,
                      const uint16_t *word,
                      uintptr_t len,
                      double *out);

// Sum of squared b-coefficients via the elimination closed form.
//
// # Safety
// `model` must be a live handle, `word` valid for `len` entries (or null
// with `len == 0`), `out` for one double.
enum SgeStatus sge_sum_b_squared(const struct SgeModel *model,
                                 const uint16_t *word,
                                 uintptr_t len,
                                 double *out);

// Angular distribution over all depth-m words: fills `mass` with per-bin
// masses on (-pi, pi] split into `bins` equal bins. Total mass is 1.
//
// # Safety
// `model` must be a live handle and `mass` valid for `bins` doubles.
enum SgeStatus sge_theta_histogram(const struct SgeModel *model,
                                   uint32_t depth,
                                   int32_t nu_weighted,
                                   uintptr_t bins,
                                   double *mass);

// Radial distribution over all depth-m words on [0, 1/sqrt(6)].
//
// # Safety
// `model` must be a live handle and `mass` valid for `bins` doubles.
enum SgeStatus sge_radius_histogram(const struct SgeModel *model,
                                    uint32_t depth,
                                    int32_t nu_weighted,
                                    uintptr_t bins,
                                    double *mass);

// Static name for a status code.
const char *sge_status_name(enum SgeStatus status);

// Library version as a static string.
const char *sge_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SG_ENERGY_H */
