//! C ABI over the `qcopies` library.
//!
//! Every function returns a [`QcStatus`] and writes results through out
//! pointers. States and allocations are opaque handles owned by the caller
//! and released with their `_free` function. After a non-OK status,
//! `qc_last_error_message` describes the failure on the calling thread.
//! Panics never cross the boundary; they surface as `QC_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use qcopies::adaptive::ten_photon_cost;
use qcopies::allocator::{allocate_sc, solve_budget, BudgetProblem, CopyAllocation};
use qcopies::hoeffding;
use qcopies::quantum::{depolarized_sc, fidelity_pure, sc_state, DensityMatrix};
use qcopies::simulator::WitnessSampler;
use qcopies::witness::{self, build_settings, SettingProbabilities};
use qcopies::{Error, RngSeed};

/// Result code of every exported function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QcStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// Length or qubit-count mismatch.
    Size = 2,
    /// Argument outside the mathematical domain.
    Domain = 3,
    /// Every variance weight is zero.
    Degenerate = 4,
    Infeasible = 5,
    Shape = 6,
    Config = 7,
    /// Malformed JSON input.
    Json = 8,
    Io = 9,
    /// A string argument was not valid UTF-8.
    Utf8 = 10,
    Panic = 11,
}

/// Opaque density matrix.
pub struct QcDensityMatrix(DensityMatrix);

/// Opaque copy allocation: integer copies per setting.
pub struct QcAllocation(CopyAllocation);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> QcStatus {
    match e {
        Error::Size(_) => QcStatus::Size,
        Error::Domain(_) => QcStatus::Domain,
        Error::Degenerate(_) => QcStatus::Degenerate,
        Error::Infeasible(_) => QcStatus::Infeasible,
        Error::Shape(_) => QcStatus::Shape,
        Error::Config(_) => QcStatus::Config,
        Error::Json(_) => QcStatus::Json,
        Error::Io(_) => QcStatus::Io,
    }
}

struct Failure(QcStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(name: &str) -> Failure {
    Failure(QcStatus::NullPointer, format!("{name} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> QcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            QcStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_last_error(format!("internal panic: {msg}"));
            QcStatus::Panic
        }
    }
}

unsafe fn slice<'a, T>(ptr: *const T, len: usize, name: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(null(name));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

unsafe fn slice_mut<'a, T>(ptr: *mut T, len: usize, name: &str) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if ptr.is_null() {
        return Err(null(name));
    }
    Ok(std::slice::from_raw_parts_mut(ptr, len))
}

unsafe fn write<T>(out: *mut T, value: T, name: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(name));
    }
    out.write(value);
    Ok(())
}

unsafe fn handle<'a, T>(ptr: *const T, name: &str) -> Result<&'a T, Failure> {
    ptr.as_ref().ok_or_else(|| null(name))
}

fn qubits(rho: &QcDensityMatrix) -> Result<usize, Failure> {
    rho.0
        .qubits()
        .ok_or_else(|| Failure(QcStatus::Size, "dimension is not a power of two".into()))
}

fn probabilities(p: &[f64]) -> Result<SettingProbabilities, Failure> {
    Ok(SettingProbabilities::from_vec(p.to_vec())?)
}

/// Message for the last failed call on this thread, or null after a
/// success. Valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn qc_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn qc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// n-qubit cat state mixed with white noise to the given fidelity.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn qc_density_sc_depolarized(
    n: usize,
    fidelity: f64,
    out: *mut *mut QcDensityMatrix,
) -> QcStatus {
    guard(|| {
        let rho = depolarized_sc(n, fidelity)?;
        write(out, Box::into_raw(Box::new(QcDensityMatrix(rho))), "out")
    })
}

/// Parses `{"n": int, "re": [[...]], "im": [[...]]}`.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` as above.
#[no_mangle]
pub unsafe extern "C" fn qc_density_from_json(
    json: *const c_char,
    out: *mut *mut QcDensityMatrix,
) -> QcStatus {
    guard(|| {
        if json.is_null() {
            return Err(null("json"));
        }
        let text = CStr::from_ptr(json)
            .to_str()
            .map_err(|e| Failure(QcStatus::Utf8, e.to_string()))?;
        let rho = DensityMatrix::from_json(text)?;
        write(out, Box::into_raw(Box::new(QcDensityMatrix(rho))), "out")
    })
}

/// Releases a density matrix. Null is ignored.
///
/// # Safety
/// `rho` must come from this library and must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn qc_density_free(rho: *mut QcDensityMatrix) {
    if !rho.is_null() {
        drop(Box::from_raw(rho));
    }
}

/// Qubit count of the state.
///
/// # Safety
/// `rho` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn qc_density_qubits(
    rho: *const QcDensityMatrix,
    out: *mut usize,
) -> QcStatus {
    guard(|| {
        let rho = handle(rho, "rho")?;
        let n = qubits(rho)?;
        write(out, n, "out")
    })
}

/// Direct fidelity ⟨SC|ρ|SC⟩ with the cat state.
///
/// # Safety
/// `rho` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn qc_density_fidelity_sc(
    rho: *const QcDensityMatrix,
    out: *mut f64,
) -> QcStatus {
    guard(|| {
        let rho = handle(rho, "rho")?;
        let n = qubits(rho)?;
        write(out, fidelity_pure(&rho.0, &sc_state(n)?)?, "out")
    })
}

/// Writes the n + 1 setting probabilities P1..P(n+1); `len` must equal n + 1.
///
/// # Safety
/// `rho` must be a live handle and `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn qc_setting_probabilities(
    rho: *const QcDensityMatrix,
    out: *mut f64,
    len: usize,
) -> QcStatus {
    guard(|| {
        let rho = handle(rho, "rho")?;
        let n = qubits(rho)?;
        if len != n + 1 {
            return Err(Failure(
                QcStatus::Size,
                format!("buffer holds {len} values, need {}", n + 1),
            ));
        }
        let p = witness::setting_probabilities(&rho.0, &build_settings(n)?)?;
        slice_mut(out, len, "out")?.copy_from_slice(&p.p);
        Ok(())
    })
}

/// Fidelity from setting probabilities P1..P(n+1).
///
/// # Safety
/// `p` must hold `len` doubles and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn qc_fidelity_from_probabilities(
    p: *const f64,
    len: usize,
    out: *mut f64,
) -> QcStatus {
    guard(|| {
        let p = probabilities(slice(p, len, "p")?)?;
        write(out, witness::fidelity_from_probabilities(&p), "out")
    })
}

/// Binomial standard deviation of the fidelity estimate for copies `t`.
///
/// # Safety
/// `p` and `t` must each hold `len` values and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn qc_delta_f(
    p: *const f64,
    t: *const u64,
    len: usize,
    out: *mut f64,
) -> QcStatus {
    guard(|| {
        let p = probabilities(slice(p, len, "p")?)?;
        let t = slice(t, len, "t")?;
        write(out, witness::delta_f(&p, t)?, "out")
    })
}

/// Fewest copies per setting keeping the fidelity standard deviation below
/// `epsilon0`.
///
/// # Safety
/// `p` must hold `len` doubles and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn qc_allocate_sc(
    p: *const f64,
    len: usize,
    epsilon0: f64,
    out: *mut *mut QcAllocation,
) -> QcStatus {
    guard(|| {
        let p = probabilities(slice(p, len, "p")?)?;
        let a = allocate_sc(&p, epsilon0)?;
        write(out, Box::into_raw(Box::new(QcAllocation(a))), "out")
    })
}

/// Minimizes Σ t_j subject to Σ k_j / t_j ≤ epsilon.
///
/// # Safety
/// `k` must hold `len` doubles and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn qc_solve_budget(
    k: *const f64,
    len: usize,
    epsilon: f64,
    out: *mut *mut QcAllocation,
) -> QcStatus {
    guard(|| {
        let problem = BudgetProblem::new(slice(k, len, "k")?.to_vec(), epsilon)?;
        let a = solve_budget(&problem)?;
        write(out, Box::into_raw(Box::new(QcAllocation(a))), "out")
    })
}

/// Releases an allocation. Null is ignored.
///
/// # Safety
/// `a` must come from this library and must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn qc_allocation_free(a: *mut QcAllocation) {
    if !a.is_null() {
        drop(Box::from_raw(a));
    }
}

/// Number of settings in the allocation.
///
/// # Safety
/// `a` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn qc_allocation_len(a: *const QcAllocation, out: *mut usize) -> QcStatus {
    guard(|| write(out, handle(a, "allocation")?.0.len(), "out"))
}

/// Copies the integer counts into `out`; `len` must equal the allocation length.
///
/// # Safety
/// `a` must be a live handle and `out` must hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn qc_allocation_counts(
    a: *const QcAllocation,
    out: *mut u64,
    len: usize,
) -> QcStatus {
    guard(|| {
        let a = handle(a, "allocation")?;
        if len != a.0.len() {
            return Err(Failure(
                QcStatus::Size,
                format!("buffer holds {len} values, need {}", a.0.len()),
            ));
        }
        slice_mut(out, len, "out")?.copy_from_slice(&a.0.t);
        Ok(())
    })
}

/// Unrounded optimum per setting; `len` must equal the allocation length.
///
/// # Safety
/// `a` must be a live handle and `out` must hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn qc_allocation_real_counts(
    a: *const QcAllocation,
    out: *mut f64,
    len: usize,
) -> QcStatus {
    guard(|| {
        let a = handle(a, "allocation")?;
        if len != a.0.len() {
            return Err(Failure(
                QcStatus::Size,
                format!("buffer holds {len} values, need {}", a.0.len()),
            ));
        }
        slice_mut(out, len, "out")?.copy_from_slice(&a.0.real_t);
        Ok(())
    })
}

/// Total copies across settings.
///
/// # Safety
/// `a` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn qc_allocation_total(a: *const QcAllocation, out: *mut u64) -> QcStatus {
    guard(|| write(out, handle(a, "allocation")?.0.total(), "out"))
}

/// Hoeffding bound 2·exp(−2 t h²) on |P̂ − P| ≥ h, clamped to 1.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qc_failure_probability(t: u64, h: f64, out: *mut f64) -> QcStatus {
    guard(|| write(out, hoeffding::failure_probability(t, h)?, "out"))
}

/// Probability that every setting lands within its deviation bound.
///
/// # Safety
/// `t` and `h` must each hold `len` values and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn qc_joint_success(
    t: *const u64,
    h: *const f64,
    len: usize,
    out: *mut f64,
) -> QcStatus {
    guard(|| {
        let joint = hoeffding::joint_success(slice(t, len, "t")?, slice(h, len, "h")?)?;
        write(out, joint, "out")
    })
}

/// Copies per setting for failure probability at most `delta` at deviation `h`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qc_required_copies(h: f64, delta: f64, out: *mut u64) -> QcStatus {
    guard(|| write(out, hoeffding::required_copies(h, delta)?, "out"))
}

/// One simulated experiment: samples `t[j]` copies of each setting from
/// `rho` and returns the fidelity estimate with its standard deviation.
/// Deterministic in `seed`.
///
/// # Safety
/// `rho` must be a live handle, `t` must hold `len` values and both out
/// pointers be writable.
#[no_mangle]
pub unsafe extern "C" fn qc_simulate_fidelity(
    rho: *const QcDensityMatrix,
    t: *const u64,
    len: usize,
    seed: u64,
    out_fidelity: *mut f64,
    out_delta_f: *mut f64,
) -> QcStatus {
    guard(|| {
        let rho = handle(rho, "rho")?;
        let n = qubits(rho)?;
        let sampler = WitnessSampler::new(&rho.0, &build_settings(n)?)?;
        let est = sampler.estimate(slice(t, len, "t")?, RngSeed::new(seed))?;
        write(out_fidelity, est.fidelity, "out_fidelity")?;
        write(out_delta_f, est.delta_f, "out_delta_f")
    })
}

/// Ten-photon copies per hour implied by an eight-photon rate in Hz, and
/// the hours needed for `copies` copies.
///
/// # Safety
/// Both out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn qc_tenphoton_cost(
    rate8: f64,
    copies: u64,
    out_copies_per_hour: *mut f64,
    out_hours: *mut f64,
) -> QcStatus {
    guard(|| {
        let c = ten_photon_cost(rate8, copies)?;
        write(
            out_copies_per_hour,
            c.copies_per_hour,
            "out_copies_per_hour",
        )?;
        write(out_hours, c.hours, "out_hours")
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn panics_become_a_status() {
        let status = guard(|| panic!("boom"));
        assert_eq!(status, QcStatus::Panic);
        let msg = unsafe { CStr::from_ptr(qc_last_error_message()) };
        assert!(msg.to_str().unwrap().contains("boom"));
    }

    #[test]
    fn interior_nul_does_not_lose_the_message() {
        set_last_error("a\0b".into());
        let msg = unsafe { CStr::from_ptr(qc_last_error_message()) };
        assert_eq!(msg.to_str().unwrap(), "a b");
    }

    #[test]
    fn config_errors_keep_their_code() {
        assert_eq!(status_of(&Error::Config("x".into())), QcStatus::Config);
    }
}
