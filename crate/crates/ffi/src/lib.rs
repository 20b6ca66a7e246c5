//! C ABI over the fwstack engine.
//!
//! Every function returns an [`FwsStatus`]. On failure a message for the
//! calling thread is available from [`fws_last_error`]. Handles are opaque
//! and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::slice;

use fwstack::ensemble::{predict_ensemble, EnsembleBundle};
use fwstack::features::{extract, MetaFeatureVector};
use fwstack::forecast::{fit, FittedModel, Forecast, ForecasterSpec, ModelKind};
use fwstack::metrics::smape;
use fwstack::series::BoxCoxParams;
use fwstack::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FwsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidSeries = 3,
    NoViableModel = 4,
    ModelFile = 5,
    Io = 6,
    Internal = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FwsModelKind {
    Arima = 0,
    HoltWinters = 1,
    Prophet = 2,
    Lstm = 3,
}

impl From<FwsModelKind> for ModelKind {
    fn from(k: FwsModelKind) -> Self {
        match k {
            FwsModelKind::Arima => ModelKind::Arima,
            FwsModelKind::HoltWinters => ModelKind::Hw,
            FwsModelKind::Prophet => ModelKind::Prophet,
            FwsModelKind::Lstm => ModelKind::Lstm,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FwsFeatures {
    pub cv: f64,
    pub svd_entropy: f64,
    pub kpss: f64,
    pub acf1: f64,
}

impl From<MetaFeatureVector> for FwsFeatures {
    fn from(f: MetaFeatureVector) -> Self {
        Self {
            cv: f.cv,
            svd_entropy: f.svd_entropy,
            kpss: f.kpss,
            acf1: f.acf1,
        }
    }
}

impl From<FwsFeatures> for MetaFeatureVector {
    fn from(f: FwsFeatures) -> Self {
        Self {
            cv: f.cv,
            svd_entropy: f.svd_entropy,
            kpss: f.kpss,
            acf1: f.acf1,
        }
    }
}

/// A fitted base model.
pub struct FwsForecaster(FittedModel);

/// A loaded ensemble model file.
pub struct FwsBundle(EnsembleBundle);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> FwsStatus {
    match err {
        Error::InvalidSeries(_)
        | Error::NonPositiveInput { .. }
        | Error::DomainError { .. }
        | Error::TooShort { .. }
        | Error::ZeroMean
        | Error::TooShortForEmbedding { .. }
        | Error::EmptyInput => FwsStatus::InvalidSeries,
        Error::InvalidArgument(_) | Error::LengthMismatch { .. } | Error::InvalidHorizon(_) | Error::InconsistentWidth { .. } => {
            FwsStatus::InvalidArgument
        }
        Error::NoViableModel => FwsStatus::NoViableModel,
        Error::ModelFile(_) => FwsStatus::ModelFile,
        Error::Io(_) | Error::UnreadableFile { .. } => FwsStatus::Io,
        _ => FwsStatus::Internal,
    }
}

/// Runs `f`, recording any error or panic for [`fws_last_error`].
fn guard(f: impl FnOnce() -> Result<(), FwsStatus>) -> FwsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FwsStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("panic inside fwstack".into());
            FwsStatus::Panic
        }
    }
}

fn fail(err: Error) -> FwsStatus {
    let s = status_of(&err);
    set_error(err.to_string());
    s
}

fn null(what: &str) -> FwsStatus {
    set_error(format!("{what} is null"));
    FwsStatus::NullPointer
}

/// # Safety
/// `ptr` must be null or point to `len` readable values.
unsafe fn input<'a>(ptr: *const f64, len: usize, what: &str) -> Result<&'a [f64], FwsStatus> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(ptr, len))
}

/// # Safety
/// `ptr` must be null or point to `len` writable values.
unsafe fn output(ptr: *mut f64, len: usize, values: &[f64]) -> Result<(), FwsStatus> {
    if values.len() > len {
        set_error(format!("output buffer holds {len} values, {} needed", values.len()));
        return Err(FwsStatus::InvalidArgument);
    }
    if values.is_empty() {
        return Ok(());
    }
    if ptr.is_null() {
        return Err(null("out"));
    }
    slice::from_raw_parts_mut(ptr, values.len()).copy_from_slice(values);
    Ok(())
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn fws_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn fws_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// sMAPE of `forecast` against `actual`, both of length `len`.
///
/// # Safety
/// Both arrays must hold `len` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fws_smape(actual: *const f64, forecast: *const f64, len: usize, out: *mut f64) -> FwsStatus {
    guard(|| {
        let a = input(actual, len, "actual")?;
        let f = input(forecast, len, "forecast")?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = smape(f, a).map_err(fail)?;
        Ok(())
    })
}

/// CV, SVD entropy, KPSS and lag-1 autocorrelation of `values`.
///
/// # Safety
/// `values` must hold `len` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fws_extract_features(values: *const f64, len: usize, out: *mut FwsFeatures) -> FwsStatus {
    guard(|| {
        let v = input(values, len, "values")?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = extract(v).map_err(fail)?.into();
        Ok(())
    })
}

/// Box-Cox transform with the given `lambda` and `shift`, written to `out`
/// (`len` values; may alias `values`).
///
/// # Safety
/// `values` and `out` must each hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn fws_box_cox(values: *const f64, len: usize, lambda: f64, shift: f64, out: *mut f64) -> FwsStatus {
    guard(|| {
        let v = input(values, len, "values")?.to_vec();
        let p = BoxCoxParams::new(lambda, shift).map_err(fail)?;
        let t: Vec<f64> = v
            .iter()
            .enumerate()
            .map(|(index, &y)| {
                if y + shift > 0.0 {
                    Ok(p.forward(y))
                } else {
                    Err(fail(Error::NonPositiveInput { index, value: y + shift }))
                }
            })
            .collect::<Result<_, _>>()?;
        output(out, len, &t)
    })
}

/// Fits a base model with default hyperparameters on `values`.
///
/// # Safety
/// `values` must hold `len` values; `out` must be writable. The handle
/// written to `out` must be released with [`fws_forecaster_free`].
#[no_mangle]
pub unsafe extern "C" fn fws_forecaster_fit(
    kind: FwsModelKind,
    seed: u64,
    values: *const f64,
    len: usize,
    out: *mut *mut FwsForecaster,
) -> FwsStatus {
    guard(|| {
        let v = input(values, len, "values")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let spec = ForecasterSpec::default_for(kind.into(), seed);
        let model = fit(&spec, v).map_err(fail)?;
        *out = Box::into_raw(Box::new(FwsForecaster(model)));
        Ok(())
    })
}

/// Writes `horizon` forecast values to `out`.
///
/// # Safety
/// `handle` must come from [`fws_forecaster_fit`]; `out` must hold
/// `horizon` values.
#[no_mangle]
pub unsafe extern "C" fn fws_forecaster_predict(handle: *const FwsForecaster, horizon: usize, out: *mut f64) -> FwsStatus {
    guard(|| {
        let model = handle.as_ref().ok_or_else(|| null("handle"))?;
        let f = model.0.predict(horizon).map_err(fail)?;
        output(out, horizon, &f)
    })
}

/// # Safety
/// `handle` must be null or come from [`fws_forecaster_fit`], and must not
/// be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn fws_forecaster_free(handle: *mut FwsForecaster) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Loads an ensemble model file written by a run.
///
/// # Safety
/// `path` must be a NUL-terminated UTF-8 string; `out` must be writable.
/// Release the handle with [`fws_bundle_free`].
#[no_mangle]
pub unsafe extern "C" fn fws_bundle_load(path: *const c_char, out: *mut *mut FwsBundle) -> FwsStatus {
    guard(|| {
        if path.is_null() {
            return Err(null("path"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let p = CStr::from_ptr(path).to_str().map_err(|e| {
            set_error(format!("path is not UTF-8: {e}"));
            FwsStatus::InvalidArgument
        })?;
        let b = EnsembleBundle::load(Path::new(p)).map_err(fail)?;
        *out = Box::into_raw(Box::new(FwsBundle(b)));
        Ok(())
    })
}

/// Horizon the bundle was trained for, or 0 for a null handle.
///
/// # Safety
/// `handle` must be null or come from [`fws_bundle_load`].
#[no_mangle]
pub unsafe extern "C" fn fws_bundle_horizon(handle: *const FwsBundle) -> usize {
    handle.as_ref().map_or(0, |b| b.0.horizon)
}

/// Meta-learner output for base forecasts `f1` and `f2` (in the bundle's
/// base-pair order) and the input window's features.
///
/// # Safety
/// `f1`, `f2` and `out` must hold `len` values; `features` must be readable.
#[no_mangle]
pub unsafe extern "C" fn fws_bundle_predict(
    handle: *const FwsBundle,
    f1: *const f64,
    f2: *const f64,
    len: usize,
    features: *const FwsFeatures,
    out: *mut f64,
) -> FwsStatus {
    guard(|| {
        let b = handle.as_ref().ok_or_else(|| null("handle"))?;
        let a = input(f1, len, "f1")?;
        let c = input(f2, len, "f2")?;
        let feats = features.as_ref().ok_or_else(|| null("features"))?;
        let y = predict_ensemble(&b.0, a, c, &(*feats).into()).map_err(fail)?;
        output(out, len, &y)
    })
}

/// # Safety
/// `handle` must be null or come from [`fws_bundle_load`], and must not be
/// used afterwards.
#[no_mangle]
pub unsafe extern "C" fn fws_bundle_free(handle: *mut FwsBundle) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}
