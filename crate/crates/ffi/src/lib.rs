//! C ABI over `delaymargin`. Systems are opaque `DmSystem` handles built from
//! JSON; results come back as scalars or as JSON strings owned by the caller
//! and released with `dm_string_free`. Every call returns a `DmStatus`; the
//! message for the last failure on the calling thread is available from
//! `dm_last_error_message`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use delaymargin::criteria::{hyperbolicity_test, stability_test};
use delaymargin::model::SystemSpec;
use delaymargin::resolvent::in_resolvent_set;
use delaymargin::roots::{critical_delay, spectral_abscissa, RootOptions};
use delaymargin::small_delay::{robustness_margin, MarginMode};
use delaymargin::Error;
use num_complex::Complex64;

/// Opaque handle to a validated system.
pub struct DmSystem {
    spec: SystemSpec,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidSpec = 3,
    InvalidArgument = 4,
    ComputationFailed = 5,
    Panic = 6,
}

pub const DM_MODE_STABLE: i32 = 0;
pub const DM_MODE_HYPERBOLIC: i32 = 1;

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn classify(e: &Error) -> DmStatus {
    match e {
        Error::InvalidSpec(_)
        | Error::Json(_)
        | Error::DimensionMismatch { .. }
        | Error::DelayOutOfRange { .. }
        | Error::NonFinite(_)
        | Error::Io(_) => DmStatus::InvalidSpec,
        Error::AlphaOutOfRange { .. } | Error::Config(_) => DmStatus::InvalidArgument,
        _ => DmStatus::ComputationFailed,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (DmStatus, String)>) -> DmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DmStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            DmStatus::Panic
        }
    }
}

fn lib_err(e: Error) -> (DmStatus, String) {
    (classify(&e), e.to_string())
}

fn null(what: &str) -> (DmStatus, String) {
    (DmStatus::NullPointer, format!("{what} is null"))
}

unsafe fn system<'a>(sys: *const DmSystem) -> Result<&'a DmSystem, (DmStatus, String)> {
    // SAFETY: the caller passes a handle from dm_system_from_json or null.
    unsafe { sys.as_ref() }.ok_or_else(|| null("system"))
}

unsafe fn write_out<T>(out: *mut T, v: T) -> Result<(), (DmStatus, String)> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    // SAFETY: checked non-null; the caller provides writable storage.
    unsafe { out.write(v) };
    Ok(())
}

unsafe fn write_json(out: *mut *mut c_char, v: serde_json::Result<String>) -> Result<(), (DmStatus, String)> {
    let s = v.map_err(|e| (DmStatus::ComputationFailed, e.to_string()))?;
    let c = CString::new(s).map_err(|e| (DmStatus::ComputationFailed, e.to_string()))?;
    // SAFETY: forwarded caller contract.
    unsafe { write_out(out, c.into_raw()) }
}

/// Parses a JSON system spec into a new handle stored in `*out`.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dm_system_from_json(json: *const c_char, out: *mut *mut DmSystem) -> DmStatus {
    guard(|| {
        if json.is_null() {
            return Err(null("json"));
        }
        // SAFETY: non-null NUL-terminated string per the contract.
        let text = unsafe { CStr::from_ptr(json) }.to_str().map_err(|e| (DmStatus::InvalidUtf8, e.to_string()))?;
        let spec = SystemSpec::from_json_str(text).map_err(lib_err)?;
        let handle = Box::into_raw(Box::new(DmSystem { spec }));
        // SAFETY: forwarded caller contract.
        unsafe { write_out(out, handle) }.inspect_err(|_| {
            // SAFETY: the handle was created above and never shared.
            drop(unsafe { Box::from_raw(handle) });
        })
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `sys` must come from `dm_system_from_json` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn dm_system_free(sys: *mut DmSystem) {
    if !sys.is_null() {
        // SAFETY: ownership returns from the caller.
        drop(unsafe { Box::from_raw(sys) });
    }
}

/// State dimension `n`.
///
/// # Safety
/// `sys` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dm_system_dim(sys: *const DmSystem, out: *mut usize) -> DmStatus {
    guard(|| unsafe { write_out(out, system(sys)?.spec.n()) })
}

/// Largest real part of the characteristic roots.
///
/// # Safety
/// `sys` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dm_spectral_abscissa(sys: *const DmSystem, out: *mut f64) -> DmStatus {
    guard(|| {
        let s = unsafe { system(sys)? };
        let rs = spectral_abscissa(&s.spec, &RootOptions::default()).map_err(lib_err)?;
        let a = rs.abscissa.ok_or((DmStatus::ComputationFailed, "no characteristic root in the search window".into()))?;
        unsafe { write_out(out, a) }
    })
}

/// Root set as JSON.
///
/// # Safety
/// `sys` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dm_roots_json(sys: *const DmSystem, out: *mut *mut c_char) -> DmStatus {
    guard(|| {
        let s = unsafe { system(sys)? };
        let rs = spectral_abscissa(&s.spec, &RootOptions::default()).map_err(lib_err)?;
        unsafe { write_json(out, serde_json::to_string(&rs)) }
    })
}

/// Smallest singular value of `Δ(re + i·im)` in `*sigma_min` and resolvent-set membership in `*in_resolvent`.
///
/// # Safety
/// `sys` must be a live handle; output pointers writable.
#[no_mangle]
pub unsafe extern "C" fn dm_char_matrix_sigma_min(
    sys: *const DmSystem,
    re: f64,
    im: f64,
    sigma_min: *mut f64,
    in_resolvent: *mut bool,
) -> DmStatus {
    guard(|| {
        let s = unsafe { system(sys)? };
        if !(re.is_finite() && im.is_finite()) {
            return Err((DmStatus::InvalidArgument, "lambda must be finite".into()));
        }
        let m = in_resolvent_set(&s.spec, Complex64::new(re, im));
        unsafe {
            write_out(sigma_min, m.margin)?;
            write_out(in_resolvent, m.in_resolvent_set)
        }
    })
}

/// Hyperbolicity report as JSON.
///
/// # Safety
/// `sys` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dm_hyperbolicity_test_json(sys: *const DmSystem, out: *mut *mut c_char) -> DmStatus {
    guard(|| {
        let s = unsafe { system(sys)? };
        let rep = hyperbolicity_test(&s.spec).map_err(lib_err)?;
        unsafe { write_json(out, serde_json::to_string(&rep)) }
    })
}

/// Stability report at decay rate `alpha` as JSON.
///
/// # Safety
/// `sys` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dm_stability_test_json(sys: *const DmSystem, alpha: f64, out: *mut *mut c_char) -> DmStatus {
    guard(|| {
        let s = unsafe { system(sys)? };
        let rep = stability_test(&s.spec, alpha).map_err(lib_err)?;
        unsafe { write_json(out, serde_json::to_string(&rep)) }
    })
}

/// Small-delay margin of a feedback system as JSON; `mode` is
/// `DM_MODE_STABLE` or `DM_MODE_HYPERBOLIC`.
///
/// # Safety
/// `sys` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dm_robustness_margin_json(sys: *const DmSystem, mode: i32, out: *mut *mut c_char) -> DmStatus {
    guard(|| {
        let s = unsafe { system(sys)? };
        let mode = match mode {
            DM_MODE_STABLE => MarginMode::Stable,
            DM_MODE_HYPERBOLIC => MarginMode::Hyperbolic,
            other => return Err((DmStatus::InvalidArgument, format!("unknown margin mode {other}"))),
        };
        let fb = s.spec.feedback_data().ok_or((DmStatus::InvalidSpec, "margin needs a feedback system".into()))?;
        let m = robustness_margin(s.spec.b(), &fb.c, mode).map_err(lib_err)?;
        unsafe { write_json(out, serde_json::to_string(&m)) }
    })
}

/// First delay in `[lo, hi]` where the feedback system's rightmost root crosses `iℝ`.
///
/// # Safety
/// `sys` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dm_critical_delay(sys: *const DmSystem, lo: f64, hi: f64, out: *mut f64) -> DmStatus {
    guard(|| {
        let s = unsafe { system(sys)? };
        let fb = s.spec.feedback_data().ok_or((DmStatus::InvalidSpec, "critical delay needs a feedback system".into()))?;
        let cd = critical_delay(s.spec.b(), &fb.c, lo, hi).map_err(lib_err)?;
        unsafe { write_out(out, cd.tau) }
    })
}

/// Message for the last failed call on this thread, or null. Valid until the next failing call.
#[no_mangle]
pub extern "C" fn dm_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from one of the `*_json` functions and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn dm_string_free(s: *mut c_char) {
    if !s.is_null() {
        // SAFETY: ownership returns from the caller.
        drop(unsafe { CString::from_raw(s) });
    }
}

/// Library version, a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
