//! C ABI over `zib-core`.
//!
//! Objects are opaque handles created and released through this interface.
//! Every fallible call returns a [`ZibStatus`]; on failure a description is
//! available from [`zib_last_error_message`] on the same thread. Output arrays
//! are caller-allocated and sized from [`zib_fit_dim`] or [`zib_dataset_dim`].

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use zib_core::inference::infer;
use zib_core::io::{read_csv, to_json_string, DatasetSchema, FitReport};
use zib_core::likelihood::{log_likelihood, score};
use zib_core::model::{Dataset, LinkPair, Observation, ParameterVector};
use zib_core::solver::{fit, fit_binomial_only, FitConfig, FitResult};
use zib_core::{Error, LinkKind};

/// Result codes. Zero is success.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ZibStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    RankDeficient = 4,
    NotConverged = 5,
    Numerical = 6,
    Io = 7,
    Parse = 8,
    Panic = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ZibLink {
    Probit = 0,
    Logit = 1,
}

impl From<ZibLink> for LinkKind {
    fn from(l: ZibLink) -> Self {
        match l {
            ZibLink::Probit => LinkKind::Probit,
            ZibLink::Logit => LinkKind::Logit,
        }
    }
}

/// Opaque dataset handle.
pub struct ZibDataset {
    inner: Dataset,
}

/// Opaque fit handle.
pub struct ZibFit {
    result: FitResult,
    std_errors: Option<Vec<f64>>,
    json: CString,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(e: &Error) -> ZibStatus {
    match e {
        Error::Dimension(_) => ZibStatus::DimensionMismatch,
        Error::RankDeficient { .. } => ZibStatus::RankDeficient,
        Error::NotPositiveDefinite | Error::Numerical(_) => ZibStatus::Numerical,
        Error::Io { .. } => ZibStatus::Io,
        Error::Csv(_) | Error::Json(_) | Error::Cell { .. } | Error::MissingColumn(_) => ZibStatus::Parse,
        _ => ZibStatus::InvalidArgument,
    }
}

struct Failure(ZibStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn fail<T>(status: ZibStatus, msg: &str) -> Result<T, Failure> {
    Err(Failure(status, msg.to_string()))
}

/// Runs `body`, recording any error or panic for `zib_last_error_message`.
fn guard(body: impl FnOnce() -> Result<(), Failure>) -> ZibStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => ZibStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            ZibStatus::Panic
        }
    }
}

unsafe fn slice<'a, T>(p: *const T, len: usize) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return fail(ZibStatus::NullPointer, "null input array");
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out_slice<'a>(p: *mut f64, len: usize) -> Result<&'a mut [f64], Failure> {
    if p.is_null() {
        return fail(ZibStatus::NullPointer, "null output array");
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return fail(ZibStatus::NullPointer, &format!("null {what}"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(ZibStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

unsafe fn handle<'a, T>(p: *const T) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure(ZibStatus::NullPointer, "null handle".into()))
}

/// Builds a dataset from row-major covariate arrays.
///
/// `x` holds `rows * p` values and `w` holds `rows * q`; the first column of
/// each must be the intercept (all ones).
///
/// # Safety
/// Arrays must be valid for the stated lengths; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn zib_dataset_new(
    rows: usize,
    y: *const u64,
    n_trials: *const u64,
    x: *const f64,
    p: usize,
    w: *const f64,
    q: usize,
    out: *mut *mut ZibDataset,
) -> ZibStatus {
    guard(|| {
        if out.is_null() {
            return fail(ZibStatus::NullPointer, "null output handle");
        }
        *out = ptr::null_mut();
        if p == 0 || q == 0 {
            return fail(ZibStatus::DimensionMismatch, "covariate dimensions must be positive");
        }
        let y = slice(y, rows)?;
        let n = slice(n_trials, rows)?;
        let x = slice(x, rows * p)?;
        let w = slice(w, rows * q)?;
        let obs = (0..rows)
            .map(|i| Observation::new(y[i], n[i], x[i * p..(i + 1) * p].to_vec(), w[i * q..(i + 1) * q].to_vec()))
            .collect();
        let inner = Dataset::new(obs)?;
        *out = Box::into_raw(Box::new(ZibDataset { inner }));
        Ok(())
    })
}

/// Reads a CSV file using a schema given as a JSON string.
///
/// # Safety
/// `path` and `schema_json` must be NUL-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn zib_dataset_from_csv(
    path: *const c_char,
    schema_json: *const c_char,
    out: *mut *mut ZibDataset,
) -> ZibStatus {
    guard(|| {
        if out.is_null() {
            return fail(ZibStatus::NullPointer, "null output handle");
        }
        *out = ptr::null_mut();
        let path = str_arg(path, "path")?;
        let schema: DatasetSchema = serde_json::from_str(str_arg(schema_json, "schema")?).map_err(Error::from)?;
        let load = read_csv(path, &schema)?;
        *out = Box::into_raw(Box::new(ZibDataset { inner: load.dataset }));
        Ok(())
    })
}

/// Writes the row count and covariate dimensions of a dataset.
///
/// # Safety
/// `data` must be a live handle; each output pointer may be null.
#[no_mangle]
pub unsafe extern "C" fn zib_dataset_dim(
    data: *const ZibDataset,
    rows: *mut usize,
    p: *mut usize,
    q: *mut usize,
) -> ZibStatus {
    guard(|| {
        let d = &handle(data)?.inner;
        for (ptr, v) in [(rows, d.len()), (p, d.p()), (q, d.q())] {
            if let Some(r) = ptr.as_mut() {
                *r = v;
            }
        }
        Ok(())
    })
}

/// # Safety
/// `data` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn zib_dataset_free(data: *mut ZibDataset) {
    if !data.is_null() {
        drop(Box::from_raw(data));
    }
}

/// Fits the model. A fit that runs but does not converge still yields a
/// handle and returns `NotConverged`; standard errors are then unavailable.
///
/// `binomial_only` nonzero fits the count part alone, ignoring `link_zero`.
///
/// # Safety
/// `data` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn zib_fit(
    data: *const ZibDataset,
    link_zero: ZibLink,
    link_count: ZibLink,
    binomial_only: c_int,
    out: *mut *mut ZibFit,
) -> ZibStatus {
    let mut converged = true;
    let status = guard(|| {
        if out.is_null() {
            return fail(ZibStatus::NullPointer, "null output handle");
        }
        *out = ptr::null_mut();
        let d = &handle(data)?.inner;
        let config = FitConfig::with_links(LinkPair::new(link_zero.into(), link_count.into()));
        let result = if binomial_only != 0 { fit_binomial_only(d, &config)? } else { fit(d, &config)? };
        let inference = if result.converged { Some(infer(&result, 0.95)?) } else { None };
        let report = FitReport::new(&result, inference.as_ref(), d, 0.95, None);
        let json = CString::new(to_json_string(&report)?).map_err(|_| Failure(ZibStatus::Numerical, "NUL in report".into()))?;
        converged = result.converged;
        *out = Box::into_raw(Box::new(ZibFit { std_errors: inference.map(|r| r.std_errors), result, json }));
        Ok(())
    });
    if status == ZibStatus::Ok && !converged {
        set_error("the fit did not converge");
        return ZibStatus::NotConverged;
    }
    status
}

/// # Safety
/// `fit` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn zib_fit_free(fit: *mut ZibFit) {
    if !fit.is_null() {
        drop(Box::from_raw(fit));
    }
}

/// Number of estimated coefficients (zero part first, then count part).
///
/// # Safety
/// `fit` must be a live handle or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn zib_fit_dim(fit: *const ZibFit) -> usize {
    fit.as_ref().map_or(0, |f| f.result.theta_hat.k())
}

/// # Safety
/// `fit` must be a live handle; `out` must hold `zib_fit_dim(fit)` values.
#[no_mangle]
pub unsafe extern "C" fn zib_fit_estimates(fit: *const ZibFit, out: *mut f64) -> ZibStatus {
    guard(|| {
        let f = handle(fit)?;
        let est = f.result.theta_hat.to_stacked();
        out_slice(out, est.len())?.copy_from_slice(&est);
        Ok(())
    })
}

/// # Safety
/// `fit` must be a live handle; `out` must hold `zib_fit_dim(fit)` values.
#[no_mangle]
pub unsafe extern "C" fn zib_fit_std_errors(fit: *const ZibFit, out: *mut f64) -> ZibStatus {
    guard(|| {
        let f = handle(fit)?;
        match &f.std_errors {
            Some(se) => {
                out_slice(out, se.len())?.copy_from_slice(se);
                Ok(())
            }
            None => fail(ZibStatus::NotConverged, "standard errors need a converged fit"),
        }
    })
}

/// # Safety
/// `fit` must be a live handle or null (returns NaN).
#[no_mangle]
pub unsafe extern "C" fn zib_fit_loglik(fit: *const ZibFit) -> f64 {
    fit.as_ref().map_or(f64::NAN, |f| f.result.loglik)
}

/// # Safety
/// `fit` must be a live handle or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn zib_fit_converged(fit: *const ZibFit) -> c_int {
    fit.as_ref().map_or(0, |f| f.result.converged as c_int)
}

/// # Safety
/// `fit` must be a live handle or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn zib_fit_iterations(fit: *const ZibFit) -> usize {
    fit.as_ref().map_or(0, |f| f.result.iterations)
}

/// The JSON fit report. Release with [`zib_string_free`].
///
/// # Safety
/// `fit` must be a live handle or null (returns null).
#[no_mangle]
pub unsafe extern "C" fn zib_fit_to_json(fit: *const ZibFit) -> *mut c_char {
    match fit.as_ref() {
        Some(f) => f.json.clone().into_raw(),
        None => ptr::null_mut(),
    }
}

/// # Safety
/// `s` must be null or a string returned by this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn zib_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

unsafe fn theta_arg(d: &Dataset, theta: *const f64, len: usize) -> Result<ParameterVector, Failure> {
    if len != d.k() {
        return fail(ZibStatus::DimensionMismatch, &format!("theta has {len} entries, expected {}", d.k()));
    }
    Ok(ParameterVector::from_stacked(d.p(), slice(theta, len)?))
}

/// Log-likelihood at a stacked parameter `theta` of length `p + q`.
///
/// # Safety
/// `data` must be a live handle, `theta` valid for `len` reads, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn zib_log_likelihood(
    data: *const ZibDataset,
    link_zero: ZibLink,
    link_count: ZibLink,
    theta: *const f64,
    len: usize,
    out: *mut f64,
) -> ZibStatus {
    guard(|| {
        let d = &handle(data)?.inner;
        let t = theta_arg(d, theta, len)?;
        let ll = log_likelihood(&t, d, LinkPair::new(link_zero.into(), link_count.into()))?;
        out_slice(out, 1)?[0] = ll;
        Ok(())
    })
}

/// Score vector at `theta`, written to `out` (length `len`).
///
/// # Safety
/// `data` must be a live handle; `theta` and `out` valid for `len` elements.
#[no_mangle]
pub unsafe extern "C" fn zib_score(
    data: *const ZibDataset,
    link_zero: ZibLink,
    link_count: ZibLink,
    theta: *const f64,
    len: usize,
    out: *mut f64,
) -> ZibStatus {
    guard(|| {
        let d = &handle(data)?.inner;
        let t = theta_arg(d, theta, len)?;
        let s = score(&t, d, LinkPair::new(link_zero.into(), link_count.into()))?;
        out_slice(out, len)?.copy_from_slice(s.score.as_slice());
        Ok(())
    })
}

/// Message for the last failed call on this thread, or null. The pointer
/// stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn zib_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn zib_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
