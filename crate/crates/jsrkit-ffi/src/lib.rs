//! C ABI over the jsrkit pipeline.
//!
//! All objects cross the boundary as opaque handles created and destroyed by
//! this library. Every function returns a [`JsrStatus`]; on anything other
//! than `Ok` a thread-local message is available through
//! [`jsrkit_last_error_message`]. Strings returned through out-parameters are
//! owned by the caller and must be released with [`jsrkit_string_free`].
//!
//! The generated header lands in `include/jsrkit.h` at build time.

use jsrkit::cli::FamilySpec;
use jsrkit::multi::{certify_jsr, CertifyConfig, CertifyOutcome};
use jsrkit::norm::{
    build_barabanov, irreducibility_check, BarabanovNorm, BuildFailure, BuildOutcome,
    Irreducibility,
};
use jsrkit::polytope::InvariantBody;
use jsrkit::positive::{monotone_barabanov, monotone_certify};
use jsrkit::MatrixFamily;
use nalgebra::DVector;
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

/// Result of every API call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JsrStatus {
    /// Success.
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// Input could not be parsed or failed validation.
    BadInput = 2,
    /// The family has a common invariant subspace; the method does not apply.
    Reducible = 3,
    /// Iteration or search budget ran out before certification.
    Budget = 4,
    /// No certificate was found (for example, unresolved candidate ties).
    NotFound = 5,
    /// Numerical failure inside the solvers.
    Numeric = 6,
    /// An internal invariant was violated; state is unchanged.
    Internal = 7,
}

pub struct JsrFamily {
    family: MatrixFamily,
    nonnegative: bool,
}

pub struct JsrBody {
    body: InvariantBody,
}

pub struct JsrNorm {
    norm: BarabanovNorm,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let sanitized: String = msg.chars().filter(|&c| c != '\0').collect();
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(sanitized).unwrap());
}

fn fail(status: JsrStatus, msg: &str) -> JsrStatus {
    set_error(msg);
    status
}

/// Last error message for the current thread.
///
/// The pointer stays valid until the next failing call on the same thread.
/// Never null; holds an empty string when no error has occurred.
///
/// # Safety
///
/// The returned pointer must not be freed or written through.
#[no_mangle]
pub unsafe extern "C" fn jsrkit_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

fn guarded(f: impl FnOnce() -> JsrStatus) -> JsrStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic with non-string payload".into());
            fail(JsrStatus::Internal, &format!("internal panic: {msg}"))
        }
    }
}

unsafe fn write_out<T>(out: *mut T, value: T) -> JsrStatus {
    if out.is_null() {
        return fail(JsrStatus::NullArgument, "output pointer is null");
    }
    out.write(value);
    JsrStatus::Ok
}

unsafe fn export_string(text: String, out: *mut *mut c_char) -> JsrStatus {
    match CString::new(text) {
        Ok(c) => write_out(out, c.into_raw()),
        Err(_) => fail(JsrStatus::Internal, "string contains interior NUL"),
    }
}

/// Release a string returned by this library. Null is ignored.
///
/// # Safety
///
/// `s` must be a pointer previously returned through a `char**` out-parameter
/// of this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn jsrkit_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

// ---------------------------------------------------------------------------
// Families
// ---------------------------------------------------------------------------

/// Parse a family from JSON:
/// `{"matrices": [[[...]]], "nonnegative": bool?, "transpose_first": bool?}`.
///
/// # Safety
///
/// `json` must be a valid NUL-terminated UTF-8 string; `out` must be a valid
/// pointer. On `Ok` the caller owns the handle and must release it with
/// [`jsrkit_family_free`].
#[no_mangle]
pub unsafe extern "C" fn jsrkit_family_from_json(
    json: *const c_char,
    out: *mut *mut JsrFamily,
) -> JsrStatus {
    guarded(|| {
        if json.is_null() {
            return fail(JsrStatus::NullArgument, "json is null");
        }
        let text = match unsafe { CStr::from_ptr(json) }.to_str() {
            Ok(t) => t,
            Err(_) => return fail(JsrStatus::BadInput, "json is not valid UTF-8"),
        };
        let spec: FamilySpec = match serde_json::from_str(text) {
            Ok(s) => s,
            Err(e) => return fail(JsrStatus::BadInput, &format!("bad family JSON: {e}")),
        };
        let family = match spec.family() {
            Ok(f) => f,
            Err(e) => return fail(JsrStatus::BadInput, &e.to_string()),
        };
        let handle = Box::new(JsrFamily {
            family,
            nonnegative: spec.nonnegative,
        });
        unsafe { write_out(out, Box::into_raw(handle)) }
    })
}

/// Release a family handle. Null is ignored.
///
/// # Safety
///
/// `family` must come from [`jsrkit_family_from_json`] and not be used after
/// this call.
#[no_mangle]
pub unsafe extern "C" fn jsrkit_family_free(family: *mut JsrFamily) {
    if !family.is_null() {
        drop(unsafe { Box::from_raw(family) });
    }
}

/// Matrix dimension of the family.
///
/// # Safety
///
/// `family` must be a live handle; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn jsrkit_family_dim(
    family: *const JsrFamily,
    out: *mut usize,
) -> JsrStatus {
    guarded(|| {
        let Some(f) = (unsafe { family.as_ref() }) else {
            return fail(JsrStatus::NullArgument, "family is null");
        };
        unsafe { write_out(out, f.family.dim()) }
    })
}

/// Number of matrices in the family.
///
/// # Safety
///
/// `family` must be a live handle; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn jsrkit_family_member_count(
    family: *const JsrFamily,
    out: *mut usize,
) -> JsrStatus {
    guarded(|| {
        let Some(f) = (unsafe { family.as_ref() }) else {
            return fail(JsrStatus::NullArgument, "family is null");
        };
        unsafe { write_out(out, f.family.len()) }
    })
}

// ---------------------------------------------------------------------------
// Invariant bodies
// ---------------------------------------------------------------------------

fn certify_config(max_len: usize, delta: f64) -> CertifyConfig {
    let mut cfg = CertifyConfig::default();
    if max_len > 0 {
        cfg.max_len = max_len;
    }
    if delta > 0.0 {
        cfg.algorithm.delta = delta;
    }
    cfg
}

/// Run the certification pipeline and return the invariant body.
///
/// `max_len` = 0 and `delta` <= 0 select the defaults. Families flagged
/// `nonnegative` go through the monotone variant.
///
/// # Safety
///
/// `family` must be a live handle; `out` must be valid. On `Ok` the caller
/// owns the body handle and must release it with [`jsrkit_body_free`].
#[no_mangle]
pub unsafe extern "C" fn jsrkit_compute_body(
    family: *const JsrFamily,
    max_len: usize,
    delta: f64,
    out: *mut *mut JsrBody,
) -> JsrStatus {
    guarded(|| {
        let Some(f) = (unsafe { family.as_ref() }) else {
            return fail(JsrStatus::NullArgument, "family is null");
        };
        let cfg = certify_config(max_len, delta);
        let outcome = if f.nonnegative {
            monotone_certify(&f.family, &cfg).map_err(|e| e.to_string())
        } else {
            if let Irreducibility::CommonInvariantSubspace(_) = irreducibility_check(&f.family) {
                return fail(
                    JsrStatus::Reducible,
                    "family has a common invariant subspace",
                );
            }
            certify_jsr(&f.family, &cfg).map_err(|e| e.to_string())
        };
        match outcome {
            Ok(CertifyOutcome::Certified { body, .. }) => {
                unsafe { write_out(out, Box::into_raw(Box::new(JsrBody { body }))) }
            }
            Ok(CertifyOutcome::Budget(p)) => fail(
                JsrStatus::Budget,
                &format!(
                    "budget exhausted after {} iterations ({} alive nodes); {} <= rho <= {}",
                    p.iterations, p.alive, p.nu_lower, p.nu_upper
                ),
            ),
            Ok(CertifyOutcome::NotFound { reason }) => fail(JsrStatus::NotFound, &reason),
            Err(msg) => fail(JsrStatus::Numeric, &msg),
        }
    })
}

/// Release a body handle. Null is ignored.
///
/// # Safety
///
/// `body` must come from [`jsrkit_compute_body`] and not be used after this
/// call.
#[no_mangle]
pub unsafe extern "C" fn jsrkit_body_free(body: *mut JsrBody) {
    if !body.is_null() {
        drop(unsafe { Box::from_raw(body) });
    }
}

/// Certified joint spectral radius attached to the body.
///
/// # Safety
///
/// `body` must be a live handle; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn jsrkit_body_nu(body: *const JsrBody, out: *mut f64) -> JsrStatus {
    guarded(|| {
        let Some(b) = (unsafe { body.as_ref() }) else {
            return fail(JsrStatus::NullArgument, "body is null");
        };
        unsafe { write_out(out, b.body.nu) }
    })
}

/// Number of generators (vertices or ellipse pairs) of the body.
///
/// # Safety
///
/// `body` must be a live handle; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn jsrkit_body_generator_count(
    body: *const JsrBody,
    out: *mut usize,
) -> JsrStatus {
    guarded(|| {
        let Some(b) = (unsafe { body.as_ref() }) else {
            return fail(JsrStatus::NullArgument, "body is null");
        };
        unsafe { write_out(out, b.body.generators.len()) }
    })
}

/// Ambient dimension of the body.
///
/// # Safety
///
/// `body` must be a live handle; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn jsrkit_body_dim(body: *const JsrBody, out: *mut usize) -> JsrStatus {
    guarded(|| {
        let Some(b) = (unsafe { body.as_ref() }) else {
            return fail(JsrStatus::NullArgument, "body is null");
        };
        unsafe { write_out(out, b.body.dim) }
    })
}

/// Serialize the body to its JSON document.
///
/// # Safety
///
/// `body` must be a live handle; `out` must be valid. The returned string is
/// released with [`jsrkit_string_free`].
#[no_mangle]
pub unsafe extern "C" fn jsrkit_body_to_json(
    body: *const JsrBody,
    out: *mut *mut c_char,
) -> JsrStatus {
    guarded(|| {
        let Some(b) = (unsafe { body.as_ref() }) else {
            return fail(JsrStatus::NullArgument, "body is null");
        };
        unsafe { export_string(b.body.to_json().to_string(), out) }
    })
}

// ---------------------------------------------------------------------------
// Norms
// ---------------------------------------------------------------------------

/// Build an extremal norm for the family.
///
/// `monotone` selects the nonnegative-orthant construction (also implied by
/// the family's `nonnegative` flag). `max_len` = 0 selects the default.
///
/// # Safety
///
/// `family` must be a live handle; `out` must be valid. On `Ok` the caller
/// owns the norm handle and must release it with [`jsrkit_norm_free`].
#[no_mangle]
pub unsafe extern "C" fn jsrkit_norm_build(
    family: *const JsrFamily,
    monotone: bool,
    max_len: usize,
    out: *mut *mut JsrNorm,
) -> JsrStatus {
    guarded(|| {
        let Some(f) = (unsafe { family.as_ref() }) else {
            return fail(JsrStatus::NullArgument, "family is null");
        };
        let cfg = certify_config(max_len, 0.0);
        let outcome = if monotone || f.nonnegative {
            monotone_barabanov(&f.family, &cfg).map_err(|e| e.to_string())
        } else {
            build_barabanov(&f.family, &cfg).map_err(|e| e.to_string())
        };
        match outcome {
            Ok(BuildOutcome::Built(norm)) => {
                unsafe { write_out(out, Box::into_raw(Box::new(JsrNorm { norm }))) }
            }
            Ok(BuildOutcome::Failed(BuildFailure::Reducible(_))) => fail(
                JsrStatus::Reducible,
                "family has a common invariant subspace",
            ),
            Ok(BuildOutcome::Failed(BuildFailure::Budget(p))) => fail(
                JsrStatus::Budget,
                &format!(
                    "budget exhausted; {} <= rho <= {}",
                    p.nu_lower, p.nu_upper
                ),
            ),
            Ok(BuildOutcome::Failed(BuildFailure::NoCertificate(reason))) => {
                fail(JsrStatus::NotFound, &reason)
            }
            Err(msg) => fail(JsrStatus::Numeric, &msg),
        }
    })
}

/// Release a norm handle. Null is ignored.
///
/// # Safety
///
/// `norm` must come from [`jsrkit_norm_build`] and not be used after this
/// call.
#[no_mangle]
pub unsafe extern "C" fn jsrkit_norm_free(norm: *mut JsrNorm) {
    if !norm.is_null() {
        drop(unsafe { Box::from_raw(norm) });
    }
}

/// Joint spectral radius certified by the norm.
///
/// # Safety
///
/// `norm` must be a live handle; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn jsrkit_norm_rho(norm: *const JsrNorm, out: *mut f64) -> JsrStatus {
    guarded(|| {
        let Some(n) = (unsafe { norm.as_ref() }) else {
            return fail(JsrStatus::NullArgument, "norm is null");
        };
        unsafe { write_out(out, n.norm.rho) }
    })
}

/// Evaluate the norm at a point of length `len`.
///
/// # Safety
///
/// `norm` must be a live handle, `x` must point to `len` readable doubles,
/// and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn jsrkit_norm_eval(
    norm: *const JsrNorm,
    x: *const f64,
    len: usize,
    out: *mut f64,
) -> JsrStatus {
    guarded(|| {
        let Some(n) = (unsafe { norm.as_ref() }) else {
            return fail(JsrStatus::NullArgument, "norm is null");
        };
        if x.is_null() {
            return fail(JsrStatus::NullArgument, "x is null");
        }
        if len != n.norm.dim {
            return fail(
                JsrStatus::BadInput,
                &format!("point has length {len}, norm lives in dimension {}", n.norm.dim),
            );
        }
        let coords = unsafe { std::slice::from_raw_parts(x, len) };
        let point = DVector::from_column_slice(coords);
        match n.norm.eval(&point) {
            Ok(v) => unsafe { write_out(out, v) },
            Err(e) => fail(JsrStatus::BadInput, &e.to_string()),
        }
    })
}

/// Serialize the norm (functionals, flags, source body) to JSON.
///
/// # Safety
///
/// `norm` must be a live handle; `out` must be valid. The returned string is
/// released with [`jsrkit_string_free`].
#[no_mangle]
pub unsafe extern "C" fn jsrkit_norm_to_json(
    norm: *const JsrNorm,
    out: *mut *mut c_char,
) -> JsrStatus {
    guarded(|| {
        let Some(n) = (unsafe { norm.as_ref() }) else {
            return fail(JsrStatus::NullArgument, "norm is null");
        };
        unsafe { export_string(n.norm.to_json().to_string(), out) }
    })
}
