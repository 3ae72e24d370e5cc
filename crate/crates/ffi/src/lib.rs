//! C interface to `christoffel`.
//!
//! Estimates live behind an opaque [`ChristoffelEstimate`] handle. Every
//! function returns a [`ChristoffelStatus`]; on failure a message is
//! available from [`christoffel_last_error`] on the same thread. Panics are
//! caught at the boundary and reported as `CHRISTOFFEL_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use christoffel::bounds::{self, PacCertificate};
use christoffel::estimators::{fit_poly, Estimator};
use christoffel::{Error, MultiIndexBasis, SupportEstimate};
use ndarray::ArrayView2;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChristoffelStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    Numeric = 4,
    Capacity = 5,
    Io = 6,
    Parse = 7,
    Panic = 8,
}

/// Opaque handle to a support estimate.
pub struct ChristoffelEstimate {
    inner: SupportEstimate,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> ChristoffelStatus {
    match e {
        Error::Argument(_) | Error::Range(_) | Error::Config { .. } => ChristoffelStatus::InvalidArgument,
        Error::DimensionMismatch { .. } => ChristoffelStatus::DimensionMismatch,
        Error::Numeric { .. } | Error::Integration { .. } => ChristoffelStatus::Numeric,
        Error::Capacity(_) => ChristoffelStatus::Capacity,
        Error::Io { .. } => ChristoffelStatus::Io,
        Error::Json(_) => ChristoffelStatus::Parse,
    }
}

enum Failure {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn guard<F: FnOnce() -> Result<(), Failure>>(f: F) -> ChristoffelStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ChristoffelStatus::Ok,
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            ChristoffelStatus::NullPointer
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            ChristoffelStatus::Panic
        }
    }
}

fn non_null<T>(p: *const T, what: &'static str) -> Result<*const T, Failure> {
    if p.is_null() {
        Err(Failure::Null(what))
    } else {
        Ok(p)
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Failure> {
    let p = non_null(p, what)?;
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::Lib(Error::Argument(format!("{what} is not valid UTF-8"))))
}

unsafe fn points_arg<'a>(points: *const f64, n_points: usize, dim: usize) -> Result<ArrayView2<'a, f64>, Failure> {
    if n_points == 0 {
        return Ok(ArrayView2::from_shape((0, dim), &[]).expect("empty view"));
    }
    let p = non_null(points, "points")?;
    let len = n_points
        .checked_mul(dim)
        .ok_or_else(|| Failure::Lib(Error::Argument("point buffer size overflows".into())))?;
    Ok(ArrayView2::from_shape((n_points, dim), std::slice::from_raw_parts(p, len)).expect("shape matches length"))
}

fn handle_out(out: *mut *mut ChristoffelEstimate, est: SupportEstimate) -> Result<(), Failure> {
    let out = non_null(out as *const _, "out")? as *mut *mut ChristoffelEstimate;
    unsafe { *out = Box::into_raw(Box::new(ChristoffelEstimate { inner: est })) };
    Ok(())
}

unsafe fn handle_ref<'a>(h: *const ChristoffelEstimate) -> Result<&'a ChristoffelEstimate, Failure> {
    Ok(&*non_null(h, "estimate")?)
}

/// Message for the last failed call on this thread, or NULL. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn christoffel_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Static description of a status code.
#[no_mangle]
pub extern "C" fn christoffel_status_string(status: ChristoffelStatus) -> *const c_char {
    let s: &'static CStr = match status {
        ChristoffelStatus::Ok => c"ok",
        ChristoffelStatus::NullPointer => c"null pointer",
        ChristoffelStatus::InvalidArgument => c"invalid argument",
        ChristoffelStatus::DimensionMismatch => c"dimension mismatch",
        ChristoffelStatus::Numeric => c"numeric failure",
        ChristoffelStatus::Capacity => c"capacity exceeded",
        ChristoffelStatus::Io => c"i/o error",
        ChristoffelStatus::Parse => c"parse error",
        ChristoffelStatus::Panic => c"internal panic",
    };
    s.as_ptr()
}

/// Classical sample size for accuracy `epsilon`, confidence `delta`, sample
/// dimension `n` and degree `m`. Writes the sample size and the VC
/// dimension `C(n+2m, n)`.
///
/// # Safety
/// `out_samples` must be writable; `out_vc_dim` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn christoffel_sample_bound(
    epsilon: f64,
    delta: f64,
    n: usize,
    m: usize,
    out_samples: *mut u64,
    out_vc_dim: *mut u64,
) -> ChristoffelStatus {
    guard(|| {
        let out_samples = non_null(out_samples as *const u64, "out_samples")? as *mut u64;
        let d = christoffel::basis_dimension(n, 2 * m)?;
        let count = bounds::classical_sample_bound(epsilon, delta, d)?;
        unsafe {
            *out_samples = count;
            if !out_vc_dim.is_null() {
                *out_vc_dim = d;
            }
        }
        Ok(())
    })
}

/// Fits the polynomial estimator of degree `m` to `n_points` row-major
/// points of dimension `dim`, with the threshold at the largest training
/// value, so every training point is inside.
///
/// # Safety
/// `points` must hold `n_points * dim` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn christoffel_fit_poly(
    points: *const f64,
    n_points: usize,
    dim: usize,
    m: usize,
    sigma0_sq: f64,
    out: *mut *mut ChristoffelEstimate,
) -> ChristoffelStatus {
    guard(|| {
        let pts = points_arg(points, n_points, dim)?;
        let basis = MultiIndexBasis::new(dim, m)?;
        let est = fit_poly(pts, &basis, sigma0_sq)?;
        let alpha = est.eval_batch(pts)?.iter().cloned().fold(0.0, f64::max);
        let se = SupportEstimate::new(
            Estimator::Poly(est),
            alpha,
            PacCertificate::uncertified(n_points as u64),
        )?;
        handle_out(out, se)
    })
}

/// Loads an estimate written by the `christoffel` tool.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn christoffel_estimate_load(
    path: *const c_char,
    out: *mut *mut ChristoffelEstimate,
) -> ChristoffelStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        handle_out(out, SupportEstimate::load(Path::new(path))?)
    })
}

/// Parses an estimate from its JSON text.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn christoffel_estimate_from_json(
    json: *const c_char,
    out: *mut *mut ChristoffelEstimate,
) -> ChristoffelStatus {
    guard(|| {
        let text = str_arg(json, "json")?;
        handle_out(out, SupportEstimate::from_json(text)?)
    })
}

/// Serializes an estimate. The returned string must be released with
/// [`christoffel_string_free`].
///
/// # Safety
/// `estimate` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn christoffel_estimate_to_json(
    estimate: *const ChristoffelEstimate,
    out: *mut *mut c_char,
) -> ChristoffelStatus {
    guard(|| {
        let h = handle_ref(estimate)?;
        let out = non_null(out as *const _, "out")? as *mut *mut c_char;
        let json = h.inner.to_json()?;
        *out = CString::new(json).expect("JSON has no NUL bytes").into_raw();
        Ok(())
    })
}

/// # Safety
/// `s` must come from [`christoffel_estimate_to_json`] and not be freed
/// twice. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn christoffel_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// # Safety
/// `estimate` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn christoffel_estimate_free(estimate: *mut ChristoffelEstimate) {
    if !estimate.is_null() {
        drop(Box::from_raw(estimate));
    }
}

/// # Safety
/// `estimate` must be a live handle; outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn christoffel_estimate_info(
    estimate: *const ChristoffelEstimate,
    out_dim: *mut usize,
    out_threshold: *mut f64,
) -> ChristoffelStatus {
    guard(|| {
        let h = handle_ref(estimate)?;
        if !out_dim.is_null() {
            *out_dim = h.inner.dim();
        }
        if !out_threshold.is_null() {
            *out_threshold = h.inner.threshold();
        }
        Ok(())
    })
}

/// Inverse Christoffel values at `n_points` row-major points.
///
/// # Safety
/// `points` must hold `n_points * dim` doubles and `out_values` room for
/// `n_points`.
#[no_mangle]
pub unsafe extern "C" fn christoffel_estimate_eval(
    estimate: *const ChristoffelEstimate,
    points: *const f64,
    n_points: usize,
    dim: usize,
    out_values: *mut f64,
) -> ChristoffelStatus {
    guard(|| {
        let h = handle_ref(estimate)?;
        let pts = points_arg(points, n_points, dim)?;
        let values = h.inner.values(pts)?;
        if n_points > 0 {
            let out = non_null(out_values as *const f64, "out_values")? as *mut f64;
            std::slice::from_raw_parts_mut(out, n_points).copy_from_slice(values.as_slice().expect("contiguous"));
        }
        Ok(())
    })
}

/// Membership (1 inside, 0 outside) of `n_points` row-major points.
///
/// # Safety
/// `points` must hold `n_points * dim` doubles and `out_members` room for
/// `n_points` bytes.
#[no_mangle]
pub unsafe extern "C" fn christoffel_estimate_contains(
    estimate: *const ChristoffelEstimate,
    points: *const f64,
    n_points: usize,
    dim: usize,
    out_members: *mut u8,
) -> ChristoffelStatus {
    guard(|| {
        let h = handle_ref(estimate)?;
        let pts = points_arg(points, n_points, dim)?;
        let inside = h.inner.contains_batch(pts)?;
        if n_points > 0 {
            let out = non_null(out_members as *const u8, "out_members")? as *mut u8;
            for (o, b) in std::slice::from_raw_parts_mut(out, n_points).iter_mut().zip(inside) {
                *o = u8::from(b);
            }
        }
        Ok(())
    })
}
