//! C ABI over `sfs-herald`.
//!
//! Every fallible function returns an [`SfsStatus`] and writes its result
//! through an out-pointer. On failure the message is kept per thread and can
//! be read with [`sfs_last_error_message`].

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use sfs_herald::gaussian::{universal_sigma, UniversalSchemeParams};
use sfs_herald::heralding::{
    conditional_probability, optimal_universal_parameter, total_probability, DetectionPattern,
};
use sfs_herald::loss::{lossy_fidelity, EfficiencySpec};
use sfs_herald::synthesis::{decompose, SchemeDecomposition};
use sfs_herald::SfsError;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SfsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    BufferTooSmall = 3,
    Computation = 4,
    Panic = 5,
}

/// Opaque universal scheme: free parameters, target squeezing and the
/// beam-splitter decomposition.
pub struct SfsScheme {
    params: UniversalSchemeParams,
    decomposition: SchemeDecomposition,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &SfsError) -> SfsStatus {
    match e {
        SfsError::Convergence { .. }
        | SfsError::NonNormalizable(_)
        | SfsError::Infeasible { .. }
        | SfsError::NotPositiveDefinite(_) => SfsStatus::Computation,
        _ => SfsStatus::InvalidArgument,
    }
}

struct Fail(SfsStatus, String);

impl From<SfsError> for Fail {
    fn from(e: SfsError) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null() -> Fail {
    Fail(SfsStatus::NullPointer, "null pointer argument".into())
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> SfsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SfsStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside sfs-herald".into());
            SfsStatus::Panic
        }
    }
}

unsafe fn write<T>(out: *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null());
    }
    out.write(value);
    Ok(())
}

unsafe fn read_slice<'a, T>(data: *const T, len: usize) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if data.is_null() {
        return Err(null());
    }
    Ok(slice::from_raw_parts(data, len))
}

unsafe fn fill(out: *mut f64, len: usize, values: &[f64]) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null());
    }
    if len < values.len() {
        return Err(Fail(
            SfsStatus::BufferTooSmall,
            format!("buffer holds {len} values, {} needed", values.len()),
        ));
    }
    ptr::copy_nonoverlapping(values.as_ptr(), out, values.len());
    Ok(())
}

unsafe fn scheme<'a>(s: *const SfsScheme) -> Result<&'a SfsScheme, Fail> {
    s.as_ref().ok_or_else(null)
}

fn boxed(params: UniversalSchemeParams) -> Result<*mut SfsScheme, Fail> {
    let decomposition = decompose(&params)?;
    Ok(Box::into_raw(Box::new(SfsScheme { params, decomposition })))
}

/// Message of the last failed call on this thread, or NULL. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn sfs_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sfs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Creates a scheme from `a_len = n_modes − 1` free parameters.
///
/// # Safety
/// `a` must point to `a_len` readable doubles and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sfs_scheme_new(
    n_modes: usize,
    a: *const f64,
    a_len: usize,
    r: f64,
    out: *mut *mut SfsScheme,
) -> SfsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null());
        }
        let a = read_slice(a, a_len)?.to_vec();
        write(out, boxed(UniversalSchemeParams::new(n_modes, a, r)?)?)
    })
}

/// Creates the scheme with `X = 2n + 1` and equal free parameters.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sfs_scheme_new_optimal(
    n_modes: usize,
    n: usize,
    r: f64,
    out: *mut *mut SfsScheme,
) -> SfsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null());
        }
        let opt = optimal_universal_parameter(n);
        if !opt.attained {
            return Err(Fail(SfsStatus::InvalidArgument, "the optimum needs n >= 1".into()));
        }
        write(
            out,
            boxed(UniversalSchemeParams::with_universal_parameter(n_modes, opt.x, r)?)?,
        )
    })
}

/// Releases a scheme. NULL is ignored.
///
/// # Safety
/// `s` must come from a constructor above and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn sfs_scheme_free(s: *mut SfsScheme) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Number of modes, or 0 for NULL.
///
/// # Safety
/// `s` must be NULL or a live scheme.
#[no_mangle]
pub unsafe extern "C" fn sfs_scheme_n_modes(s: *const SfsScheme) -> usize {
    s.as_ref().map_or(0, |s| s.params.n_modes())
}

/// # Safety
/// `s` must be a live scheme and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sfs_scheme_universal_parameter(s: *const SfsScheme, out: *mut f64) -> SfsStatus {
    guard(|| write(out, scheme(s)?.params.universal_parameter()))
}

/// Row-major σ, `n_modes²` values.
///
/// # Safety
/// `s` must be a live scheme and `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn sfs_scheme_sigma(s: *const SfsScheme, out: *mut f64, len: usize) -> SfsStatus {
    guard(|| fill(out, len, universal_sigma(&scheme(s)?.params).entries()))
}

/// Input squeezings `r_1 … r_N`.
///
/// # Safety
/// `s` must be a live scheme and `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn sfs_scheme_squeezings(s: *const SfsScheme, out: *mut f64, len: usize) -> SfsStatus {
    guard(|| fill(out, len, &scheme(s)?.decomposition.squeezings))
}

/// Beam-splitter transmittances in application order, `n_modes − 1` values.
///
/// # Safety
/// `s` must be a live scheme and `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn sfs_scheme_transmittances(s: *const SfsScheme, out: *mut f64, len: usize) -> SfsStatus {
    guard(|| {
        let t: Vec<f64> = scheme(s)?.decomposition.splitters.iter().map(|b| b.t).collect();
        fill(out, len, &t)
    })
}

/// Probability of the detector counts `counts[0..len]`.
///
/// # Safety
/// `s` must be a live scheme, `counts` must hold `len` values and `out` be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn sfs_scheme_pattern_probability(
    s: *const SfsScheme,
    counts: *const usize,
    len: usize,
    out: *mut f64,
) -> SfsStatus {
    guard(|| {
        let d = DetectionPattern::new(read_slice(counts, len)?.to_vec());
        write(out, conditional_probability(&scheme(s)?.params, &d)?)
    })
}

/// Fidelity of the order-`n` output with detectors of efficiency `eta`.
///
/// # Safety
/// `s` must be a live scheme and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sfs_scheme_lossy_fidelity(
    s: *const SfsScheme,
    n: usize,
    eta: f64,
    out: *mut f64,
) -> SfsStatus {
    guard(|| {
        let x = scheme(s)?.params.universal_parameter();
        write(out, lossy_fidelity(x, n, EfficiencySpec::new(eta)?)?)
    })
}

/// `2 (X−1)^n / (X+1)^{n+1}`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sfs_total_probability(x: f64, n: usize, out: *mut f64) -> SfsStatus {
    guard(|| write(out, total_probability(x, n)?))
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sfs_lossy_fidelity(x: f64, n: usize, eta: f64, out: *mut f64) -> SfsStatus {
    guard(|| write(out, lossy_fidelity(x, n, EfficiencySpec::new(eta)?)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ffi::CStr;

    #[test]
    fn error_message_is_thread_local() {
        let mut p = 0.0;
        assert_eq!(
            unsafe { sfs_total_probability(0.5, 1, &mut p) },
            SfsStatus::InvalidArgument
        );
        let msg = unsafe { CStr::from_ptr(sfs_last_error_message()) }
            .to_str()
            .unwrap()
            .to_string();
        assert!(msg.contains("must exceed 1"), "{msg}");
        std::thread::spawn(|| assert!(sfs_last_error_message().is_null()))
            .join()
            .unwrap();
    }

    #[test]
    fn version_is_terminated() {
        let v = unsafe { CStr::from_ptr(sfs_version()) };
        assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
    }
}
