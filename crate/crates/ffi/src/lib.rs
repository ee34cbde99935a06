//! C ABI for `tensorreg`.
//!
//! Datasets and models are opaque heap handles created and released through
//! this interface. Every fallible call returns a [`TrStatus`]; on failure the
//! message is kept per thread and read back with [`tr_last_error`]. Arrays
//! cross the boundary as pointer plus length, tensors in column-major
//! (first index fastest) order.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use tensorreg::regularization::PenaltySpec;
use tensorreg::{select_rank, DenseTensor, Error, FitConfig, GlmFamily, Matrix, TensorGlmDataset, TensorGlmModel};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Singular = 3,
    /// The fit ran out of iterations; the best model is still returned.
    NotConverged = 4,
    Io = 5,
    Parse = 6,
    BufferTooSmall = 7,
    /// A Rust panic was caught at the boundary.
    Internal = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrFamily {
    Normal = 0,
    Bernoulli = 1,
    Poisson = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrPenalty {
    None = 0,
    Lasso = 1,
    Ridge = 2,
    ElasticNet = 3,
    Scad = 4,
    Power = 5,
}

/// Fit settings. Start from [`tr_fit_options_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct TrFitOptions {
    pub rank: usize,
    pub restarts: usize,
    pub max_outer_iters: usize,
    pub epsilon: f64,
    pub seed: u64,
    pub penalty: TrPenalty,
    pub rho: f64,
    /// Penalty shape; non-positive picks the family default.
    pub lambda: f64,
}

/// Opaque dataset handle.
pub struct TrDataset(TensorGlmDataset);

/// Opaque fitted-model handle.
pub struct TrModel(TensorGlmModel);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn fail(status: TrStatus, msg: impl Into<String>) -> TrStatus {
    set_error(msg);
    status
}

fn status_of(err: &Error) -> TrStatus {
    match err {
        Error::Singular { .. } | Error::SingularInformation { .. } => TrStatus::Singular,
        Error::NotConverged { .. } | Error::MaxIterations { .. } => TrStatus::NotConverged,
        Error::Io(_) => TrStatus::Io,
        Error::Parse { .. } | Error::Json(_) | Error::Csv(_) => TrStatus::Parse,
        _ => TrStatus::InvalidArgument,
    }
}

fn from_error(err: Error) -> TrStatus {
    let status = status_of(&err);
    set_error(err.to_string());
    status
}

/// Runs `body`, turning a panic into [`TrStatus::Internal`].
fn guard(body: impl FnOnce() -> TrStatus) -> TrStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".to_string());
            fail(TrStatus::Internal, format!("internal error: {msg}"))
        }
    }
}

/// # Safety
/// `ptr` must be null or point to `len` readable values.
unsafe fn view<'a, T>(ptr: *const T, len: usize) -> Option<&'a [T]> {
    if len == 0 {
        Some(&[])
    } else if ptr.is_null() {
        None
    } else {
        Some(slice::from_raw_parts(ptr, len))
    }
}

fn family_of(f: TrFamily) -> GlmFamily {
    match f {
        TrFamily::Normal => GlmFamily::Normal,
        TrFamily::Bernoulli => GlmFamily::Bernoulli,
        TrFamily::Poisson => GlmFamily::Poisson,
    }
}

fn config_of(opts: &TrFitOptions) -> Result<FitConfig, Error> {
    let name = match opts.penalty {
        TrPenalty::None => None,
        TrPenalty::Lasso => Some("lasso"),
        TrPenalty::Ridge => Some("ridge"),
        TrPenalty::ElasticNet => Some("elastic-net"),
        TrPenalty::Scad => Some("scad"),
        TrPenalty::Power => Some("power"),
    };
    let penalty = match name {
        Some(n) => Some(PenaltySpec::from_name(n, opts.rho, (opts.lambda > 0.0).then_some(opts.lambda))?),
        None => None,
    };
    if opts.rank == 0 || opts.restarts == 0 || opts.max_outer_iters == 0 {
        return Err(Error::Domain("rank, restarts and max_outer_iters must be positive".into()));
    }
    Ok(FitConfig {
        rank: opts.rank,
        restarts: opts.restarts,
        max_outer_iters: opts.max_outer_iters,
        epsilon: opts.epsilon,
        seed: opts.seed,
        penalty,
        ..FitConfig::default()
    })
}

/// Message of the last failure on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn tr_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

#[no_mangle]
pub extern "C" fn tr_fit_options_default() -> TrFitOptions {
    let d = FitConfig::default();
    TrFitOptions {
        rank: d.rank,
        restarts: d.restarts,
        max_outer_iters: d.max_outer_iters,
        epsilon: d.epsilon,
        seed: d.seed,
        penalty: TrPenalty::None,
        rho: 0.0,
        lambda: 0.0,
    }
}

/// Builds a dataset of `n` samples. `x` holds the `n` tensors back to back,
/// each of shape `dims[0..order]`; `z` is the `n x p0` covariate matrix in
/// row-major order (null when `p0` is 0).
///
/// # Safety
/// All pointers must reference arrays of the stated sizes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tr_dataset_new(
    n: usize,
    dims: *const usize,
    order: usize,
    x: *const f64,
    y: *const f64,
    p0: usize,
    z: *const f64,
    out: *mut *mut TrDataset,
) -> TrStatus {
    guard(|| {
        if out.is_null() {
            return fail(TrStatus::NullPointer, "out is null");
        }
        let Some(dims) = view(dims, order) else {
            return fail(TrStatus::NullPointer, "dims is null");
        };
        let len: usize = dims.iter().product();
        let Some(total) = n.checked_mul(len) else {
            return fail(TrStatus::InvalidArgument, "tensor data size overflows");
        };
        let (Some(x), Some(y)) = (view(x, total), view(y, n)) else {
            return fail(TrStatus::NullPointer, "x or y is null");
        };
        let Some(z) = view(z, n * p0) else {
            return fail(TrStatus::NullPointer, "z is null");
        };
        let tensors = match x
            .chunks(len.max(1))
            .take(n)
            .map(|chunk| DenseTensor::new(dims.to_vec(), chunk.to_vec()))
            .collect::<Result<Vec<_>, _>>()
        {
            Ok(t) => t,
            Err(e) => return from_error(e),
        };
        let zm = Matrix::from_row_slice(n, p0, z);
        match TensorGlmDataset::new(y.to_vec(), zm, tensors) {
            Ok(d) => {
                *out = Box::into_raw(Box::new(TrDataset(d)));
                TrStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `dataset` must be null or a handle from [`tr_dataset_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tr_dataset_free(dataset: *mut TrDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Stores the model in `out` for [`TrStatus::Ok`] and [`TrStatus::NotConverged`].
unsafe fn emit_model(result: Result<TensorGlmModel, Error>, out: *mut *mut TrModel) -> TrStatus {
    match result {
        Ok(m) => {
            *out = Box::into_raw(Box::new(TrModel(m)));
            TrStatus::Ok
        }
        Err(Error::NotConverged { model }) => {
            set_error("block relaxation did not converge; returning the best model");
            *out = Box::into_raw(Box::new(TrModel(*model)));
            TrStatus::NotConverged
        }
        Err(e) => from_error(e),
    }
}

/// Fits a model of rank `options.rank`.
///
/// # Safety
/// `dataset` and `options` must be valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tr_fit(
    dataset: *const TrDataset,
    family: TrFamily,
    options: *const TrFitOptions,
    out: *mut *mut TrModel,
) -> TrStatus {
    guard(|| {
        if dataset.is_null() || options.is_null() || out.is_null() {
            return fail(TrStatus::NullPointer, "null argument");
        }
        let config = match config_of(&*options) {
            Ok(c) => c,
            Err(e) => return from_error(e),
        };
        emit_model(tensorreg::fit(&(*dataset).0, family_of(family), &config), out)
    })
}

/// Fits ranks `1..=max_rank` and returns the BIC choice; `options.rank` is ignored.
///
/// # Safety
/// `dataset` and `options` must be valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tr_select_rank(
    dataset: *const TrDataset,
    family: TrFamily,
    max_rank: usize,
    options: *const TrFitOptions,
    out: *mut *mut TrModel,
) -> TrStatus {
    guard(|| {
        if dataset.is_null() || options.is_null() || out.is_null() {
            return fail(TrStatus::NullPointer, "null argument");
        }
        let config = match config_of(&TrFitOptions { rank: 1, ..*options }) {
            Ok(c) => c,
            Err(e) => return from_error(e),
        };
        let result = select_rank(&(*dataset).0, family_of(family), max_rank, &config).map(|s| s.model);
        emit_model(result, out)
    })
}

/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tr_model_free(model: *mut TrModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn tr_model_rank(model: *const TrModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.rank())
}

/// # Safety
/// `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn tr_model_order(model: *const TrModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.coeff.order())
}

/// Number of covariates `p0`.
///
/// # Safety
/// `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn tr_model_num_covariates(model: *const TrModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.gamma.len())
}

/// # Safety
/// `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn tr_model_alpha(model: *const TrModel) -> f64 {
    model.as_ref().map_or(f64::NAN, |m| m.0.alpha)
}

/// # Safety
/// `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn tr_model_loglik(model: *const TrModel) -> f64 {
    model.as_ref().map_or(f64::NAN, |m| m.0.loglik)
}

/// # Safety
/// `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn tr_model_bic(model: *const TrModel) -> f64 {
    model.as_ref().map_or(f64::NAN, |m| m.0.bic)
}

/// # Safety
/// `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn tr_model_converged(model: *const TrModel) -> bool {
    model.as_ref().is_some_and(|m| m.0.converged)
}

unsafe fn copy_out(values: &[f64], out: *mut f64, len: usize) -> TrStatus {
    if out.is_null() {
        return fail(TrStatus::NullPointer, "out is null");
    }
    if len < values.len() {
        return fail(
            TrStatus::BufferTooSmall,
            format!("buffer holds {len} values, need {}", values.len()),
        );
    }
    ptr::copy_nonoverlapping(values.as_ptr(), out, values.len());
    TrStatus::Ok
}

/// Writes the `order` mode sizes into `out`.
///
/// # Safety
/// `model` must be a live handle and `out` must hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn tr_model_dims(model: *const TrModel, out: *mut usize, len: usize) -> TrStatus {
    guard(|| {
        let Some(m) = model.as_ref() else {
            return fail(TrStatus::NullPointer, "model is null");
        };
        let dims = m.0.coeff.dims();
        if out.is_null() {
            return fail(TrStatus::NullPointer, "out is null");
        }
        if len < dims.len() {
            return fail(TrStatus::BufferTooSmall, format!("need {} entries", dims.len()));
        }
        ptr::copy_nonoverlapping(dims.as_ptr(), out, dims.len());
        TrStatus::Ok
    })
}

/// Writes factor `B_{mode+1}` (`dims[mode] x rank`, column-major) into `out`.
///
/// # Safety
/// `model` must be a live handle and `out` must hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn tr_model_factor(model: *const TrModel, mode: usize, out: *mut f64, len: usize) -> TrStatus {
    guard(|| {
        let Some(m) = model.as_ref() else {
            return fail(TrStatus::NullPointer, "model is null");
        };
        if mode >= m.0.coeff.order() {
            return fail(TrStatus::InvalidArgument, format!("mode {mode} out of range"));
        }
        copy_out(m.0.coeff.factor(mode).as_slice(), out, len)
    })
}

/// Writes the covariate coefficients into `out`.
///
/// # Safety
/// `model` must be a live handle and `out` must hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn tr_model_gamma(model: *const TrModel, out: *mut f64, len: usize) -> TrStatus {
    guard(|| {
        let Some(m) = model.as_ref() else {
            return fail(TrStatus::NullPointer, "model is null");
        };
        if m.0.gamma.is_empty() {
            return TrStatus::Ok;
        }
        copy_out(&m.0.gamma, out, len)
    })
}

/// Writes the fitted mean for every sample of `dataset` into `out`.
///
/// # Safety
/// Handles must be live and `out` must hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn tr_model_predict(
    model: *const TrModel,
    dataset: *const TrDataset,
    out: *mut f64,
    len: usize,
) -> TrStatus {
    guard(|| {
        let (Some(m), Some(d)) = (model.as_ref(), dataset.as_ref()) else {
            return fail(TrStatus::NullPointer, "null handle");
        };
        let data = &d.0;
        let mut means = Vec::with_capacity(data.n());
        for i in 0..data.n() {
            let z: Vec<f64> = data.z().row(i).iter().copied().collect();
            match m.0.predict_mean(&data.x()[i], &z) {
                Ok(v) => means.push(v),
                Err(e) => return from_error(e),
            }
        }
        copy_out(&means, out, len)
    })
}

/// Serializes the model to a JSON string released with [`tr_string_free`].
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn tr_model_to_json(model: *const TrModel, out: *mut *mut c_char) -> TrStatus {
    guard(|| {
        let Some(m) = model.as_ref() else {
            return fail(TrStatus::NullPointer, "model is null");
        };
        if out.is_null() {
            return fail(TrStatus::NullPointer, "out is null");
        }
        match m.0.to_json() {
            Ok(text) => match CString::new(text) {
                Ok(c) => {
                    *out = c.into_raw();
                    TrStatus::Ok
                }
                Err(_) => fail(TrStatus::Internal, "model JSON contains a NUL byte"),
            },
            Err(e) => from_error(e),
        }
    })
}

/// Parses a model document.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn tr_model_from_json(json: *const c_char, out: *mut *mut TrModel) -> TrStatus {
    guard(|| {
        if json.is_null() || out.is_null() {
            return fail(TrStatus::NullPointer, "null argument");
        }
        let Ok(text) = CStr::from_ptr(json).to_str() else {
            return fail(TrStatus::Parse, "model JSON is not UTF-8");
        };
        match TensorGlmModel::from_json(text) {
            Ok(m) => {
                *out = Box::into_raw(Box::new(TrModel(m)));
                TrStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `s` must be null or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tr_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
