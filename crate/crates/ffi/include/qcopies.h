#ifndef QCOPIES_H
#define QCOPIES_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result code of every exported function.
 */
typedef enum QcStatus {
  QC_STATUS_OK = 0,
  /*
   A required pointer argument was null.
   */
  QC_STATUS_NULL_POINTER = 1,
  /*
   Length or qubit-count mismatch.
   */
  QC_STATUS_SIZE = 2,
  /*
   Argument outside the mathematical domain.
   */
  QC_STATUS_DOMAIN = 3,
  /*
   Every variance weight is zero.
   */
  QC_STATUS_DEGENERATE = 4,
  QC_STATUS_INFEASIBLE = 5,
  QC_STATUS_SHAPE = 6,
  QC_STATUS_CONFIG = 7,
  /*
   Malformed JSON input.
   */
  QC_STATUS_JSON = 8,
  QC_STATUS_IO = 9,
  /*
   A string argument was not valid UTF-8.
   */
  QC_STATUS_UTF8 = 10,
  QC_STATUS_PANIC = 11,
} QcStatus;

/*
 Opaque copy allocation: integer copies per setting.
 */
typedef struct QcAllocation QcAllocation;

/*
 Opaque density matrix.
 */
typedef struct QcDensityMatrix QcDensityMatrix;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message for the last failed call on this thread, or null after a
 success. Valid until the next call into this library on the same thread.
 */
const char *qc_last_error_message(void);

/*
 Library version as a static NUL-terminated string.
 */
const char *qc_version(void);

/*
 n-qubit cat state mixed with white noise to the given fidelity.

 # Safety
 `out` must be a valid pointer to writable storage for one handle.
 */
enum QcStatus qc_density_sc_depolarized(uintptr_t n, double fidelity, struct QcDensityMatrix **out);

/*
 Parses `{"n": int, "re": [[...]], "im": [[...]]}`.

 # Safety
 `json` must be a NUL-terminated string; `out` as above.
 */
enum QcStatus qc_density_from_json(const char *json, struct QcDensityMatrix **out);

/*
 Releases a density matrix. Null is ignored.

 # Safety
 `rho` must come from this library and must not be used afterwards.
 */
void qc_density_free(struct QcDensityMatrix *rho);

/*
 Qubit count of the state.

 # Safety
 `rho` must be a live handle and `out` writable.
 */
enum QcStatus qc_density_qubits(const struct QcDensityMatrix *rho, uintptr_t *out);

/*
 Direct fidelity ⟨SC|ρ|SC⟩ with the cat state.

 # Safety
 `rho` must be a live handle and `out` writable.
 */
enum QcStatus qc_density_fidelity_sc(const struct QcDensityMatrix *rho, double *out);

/*
 Writes the n + 1 setting probabilities P1..P(n+1); `len` must equal n + 1.

 # Safety
 `rho` must be a live handle and `out` must hold `len` doubles.
 */
enum QcStatus qc_setting_probabilities(const struct QcDensityMatrix *rho,
                                       double *out,
                                       uintptr_t len);

/*
 Fidelity from setting probabilities P1..P(n+1).

 # Safety
 `p` must hold `len` doubles and `out` be writable.
 */
enum QcStatus qc_fidelity_from_probabilities(const double *p, uintptr_t len, double *out);

/*
 Binomial standard deviation of the fidelity estimate for copies `t`.

 # Safety
 `p` and `t` must each hold `len` values and `out` be writable.
 */
enum QcStatus qc_delta_f(const double *p, const uint64_t *t, uintptr_t len, double *out);

/*
 Fewest copies per setting keeping the fidelity standard deviation below
 `epsilon0`.

 # Safety
 `p` must hold `len` doubles and `out` be writable.
 */
enum QcStatus qc_allocate_sc(const double *p,
                             uintptr_t len,
                             double epsilon0,
                             struct QcAllocation **out);

/*
 Minimizes Σ t_j subject to Σ k_j / t_j ≤ epsilon.

 # Safety
 `k` must hold `len` doubles and `out` be writable.
 */
enum QcStatus qc_solve_budget(const double *k,
                              uintptr_t len,
                              double epsilon,
                              struct QcAllocation **out);

/*
 Releases an allocation. Null is ignored.

 # Safety
 `a` must come from this library and must not be used afterwards.
 */
void qc_allocation_free(struct QcAllocation *a);

/*
 Number of settings in the allocation.

 # Safety
 `a` must be a live handle and `out` writable.
 */
enum QcStatus qc_allocation_len(const struct QcAllocation *a, uintptr_t *out);

/*
 Copies the integer counts into `out`; `len` must equal the allocation length.

 # Safety
 `a` must be a live handle and `out` must hold `len` values.
 */
enum QcStatus qc_allocation_counts(const struct QcAllocation *a, uint64_t *out, uintptr_t len);

/*
 Unrounded optimum per setting; `len` must equal the allocation length.

 # Safety
 `a` must be a live handle and `out` must hold `len` values.
 */
enum QcStatus qc_allocation_real_counts(const struct QcAllocation *a, double *out, uintptr_t len);

/*
 Total copies across settings.

 # Safety
 `a` must be a live handle and `out` writable.
 */
enum QcStatus qc_allocation_total(const struct QcAllocation *a, uint64_t *out);

/*
 Hoeffding bound 2·exp(−2 t h²) on |P̂ − P| ≥ h, clamped to 1.

 # Safety
 `out` must be writable.
 */
enum QcStatus qc_failure_probability(uint64_t t, double h, double *out);

/*
 Probability that every setting lands within its deviation bound.

 # Safety
 `t` and `h` must each hold `len` values and `out` be writable.
 */
enum QcStatus qc_joint_success(const uint64_t *t, const double *h, uintptr_t len, double *out);

/*
 Copies per setting for failure probability at most `delta` at deviation `h`.

 # Safety
 `out` must be writable.
 */
enum QcStatus qc_required_copies(double h, double delta, uint64_t *out);

/*
 One simulated experiment: samples `t[j]` copies of each setting from
 `rho` and returns the fidelity estimate with its standard deviation.
 Deterministic in `seed`.

 # Safety
 `rho` must be a live handle, `t` must hold `len` values and both out
 pointers be writable.
 */
enum QcStatus qc_simulate_fidelity(const struct QcDensityMatrix *rho,
                                   const uint64_t *t,
                                   uintptr_t len,
                                   uint64_t seed,
                                   double *out_fidelity,
                                   double *out_delta_f);

/*
 Ten-photon copies per hour implied by an eight-photon rate in Hz, and
 the hours needed for `copies` copies.

 # Safety
 Both out pointers must be writable.
 */
enum QcStatus qc_tenphoton_cost(double rate8,
                                uint64_t copies,
                                double *out_copies_per_hour,
                                double *out_hours);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QCOPIES_H */
