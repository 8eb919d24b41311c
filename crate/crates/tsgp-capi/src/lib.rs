//! C ABI over the evolved-model runtime: load a model document, transform
//! series into feature vectors, predict labels, and query inference cost.
//!
//! Conventions:
//! - Models are opaque `TsgpModel` handles created by `tsgp_model_load` /
//!   `tsgp_model_from_json` and released with `tsgp_model_free`.
//! - Every fallible function returns a `TsgpStatus`; on failure
//!   `tsgp_last_error` exposes a thread-local message valid until the next
//!   failing call on the same thread.
//! - The generated header lives at `include/tsgp.h` (kept in sync by the
//!   ABI test; regenerate with cbindgen where available).

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use tsgp::cost::cost_report;
use tsgp::evolution::EvolvedModel;
use tsgp::program::{deserialize_tree, evaluate_tree, ProgramTree};

/// Status codes returned by every fallible ABI function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TsgpStatus {
    TsgpOk = 0,
    TsgpErrNullArgument = 1,
    TsgpErrIo = 2,
    TsgpErrMalformedModel = 3,
    TsgpErrLengthMismatch = 4,
    TsgpErrBufferTooSmall = 5,
    TsgpErrNoClassifier = 6,
    TsgpErrUtf8 = 7,
    TsgpErrInternal = 8,
}

/// Opaque model handle: a full evolved model (tree + classifier) or a
/// tree-only document (transform and cost work; predict does not).
pub struct TsgpModel {
    tree: ProgramTree,
    full: Option<EvolvedModel>,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let safe = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = safe);
}

fn fail(status: TsgpStatus, msg: &str) -> TsgpStatus {
    set_error(msg);
    status
}

fn status_of(err: &tsgp::Error) -> TsgpStatus {
    match err {
        tsgp::Error::Io(_) => TsgpStatus::TsgpErrIo,
        tsgp::Error::MalformedModel(_) => TsgpStatus::TsgpErrMalformedModel,
        tsgp::Error::LengthMismatch { .. } => TsgpStatus::TsgpErrLengthMismatch,
        _ => TsgpStatus::TsgpErrInternal,
    }
}

fn guard(body: impl FnOnce() -> TsgpStatus) -> TsgpStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(_) => fail(TsgpStatus::TsgpErrInternal, "internal panic"),
    }
}

fn parse_model(text: &str) -> Result<TsgpModel, (TsgpStatus, String)> {
    // Prefer the full document; fall back to a tree-only document.
    match EvolvedModel::from_json(text) {
        Ok(full) => Ok(TsgpModel { tree: full.tree.clone(), full: Some(full) }),
        Err(full_err) => match deserialize_tree(text) {
            Ok((tree, _)) => Ok(TsgpModel { tree, full: None }),
            Err(_) => Err((status_of(&full_err), full_err.to_string())),
        },
    }
}

/// Last error message of the current thread (empty when none). The pointer
/// stays valid until the next failing call on this thread.
///
/// # Safety
/// The returned pointer must not be freed or used after a later ABI call
/// from the same thread fails.
#[no_mangle]
pub unsafe extern "C" fn tsgp_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Loads a model document from a file path.
///
/// # Safety
/// `path` must be a NUL-terminated string, `out_model` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tsgp_model_load(
    path: *const c_char,
    out_model: *mut *mut TsgpModel,
) -> TsgpStatus {
    guard(|| {
        if path.is_null() || out_model.is_null() {
            return fail(TsgpStatus::TsgpErrNullArgument, "null argument");
        }
        let path = match unsafe { CStr::from_ptr(path) }.to_str() {
            Ok(p) => p,
            Err(_) => return fail(TsgpStatus::TsgpErrUtf8, "path is not valid UTF-8"),
        };
        let text = match std::fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) => return fail(TsgpStatus::TsgpErrIo, &format!("{path}: {e}")),
        };
        match parse_model(&text) {
            Ok(model) => {
                unsafe { *out_model = Box::into_raw(Box::new(model)) };
                TsgpStatus::TsgpOk
            }
            Err((status, msg)) => fail(status, &msg),
        }
    })
}

/// Parses a model document from a JSON string.
///
/// # Safety
/// `json` must be a NUL-terminated string, `out_model` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tsgp_model_from_json(
    json: *const c_char,
    out_model: *mut *mut TsgpModel,
) -> TsgpStatus {
    guard(|| {
        if json.is_null() || out_model.is_null() {
            return fail(TsgpStatus::TsgpErrNullArgument, "null argument");
        }
        let text = match unsafe { CStr::from_ptr(json) }.to_str() {
            Ok(t) => t,
            Err(_) => return fail(TsgpStatus::TsgpErrUtf8, "document is not valid UTF-8"),
        };
        match parse_model(text) {
            Ok(model) => {
                unsafe { *out_model = Box::into_raw(Box::new(model)) };
                TsgpStatus::TsgpOk
            }
            Err((status, msg)) => fail(status, &msg),
        }
    })
}

/// Releases a model handle. A null pointer is a no-op.
///
/// # Safety
/// `model` must be a pointer returned by a load function, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tsgp_model_free(model: *mut TsgpModel) {
    if !model.is_null() {
        drop(unsafe { Box::from_raw(model) });
    }
}

/// Series length the model was evolved for (0 on null).
///
/// # Safety
/// `model` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn tsgp_model_series_length(model: *const TsgpModel) -> usize {
    if model.is_null() {
        return 0;
    }
    unsafe { &*model }.tree.series_length()
}

/// Output feature dimension (0 on null).
///
/// # Safety
/// `model` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn tsgp_model_feature_dim(model: *const TsgpModel) -> usize {
    if model.is_null() {
        return 0;
    }
    unsafe { &*model }.tree.feature_dim()
}

/// Number of classes of the embedded classifier (0 for tree-only models).
///
/// # Safety
/// `model` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn tsgp_model_n_classes(model: *const TsgpModel) -> usize {
    if model.is_null() {
        return 0;
    }
    unsafe { &*model }.full.as_ref().map_or(0, |m| m.classifier.n_classes)
}

/// Transforms one series into its feature vector. `out_features` must hold
/// at least `tsgp_model_feature_dim` doubles.
///
/// # Safety
/// `series` must point to `series_len` doubles and `out_features` to
/// `out_capacity` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn tsgp_model_transform(
    model: *const TsgpModel,
    series: *const f64,
    series_len: usize,
    out_features: *mut f64,
    out_capacity: usize,
) -> TsgpStatus {
    guard(|| {
        if model.is_null() || series.is_null() || out_features.is_null() {
            return fail(TsgpStatus::TsgpErrNullArgument, "null argument");
        }
        let model = unsafe { &*model };
        let x = unsafe { std::slice::from_raw_parts(series, series_len) };
        let dim = model.tree.feature_dim();
        if out_capacity < dim {
            return fail(
                TsgpStatus::TsgpErrBufferTooSmall,
                &format!("need {dim} doubles, got {out_capacity}"),
            );
        }
        match evaluate_tree(&model.tree, x) {
            Ok(features) => {
                let out = unsafe { std::slice::from_raw_parts_mut(out_features, dim) };
                out.copy_from_slice(&features);
                TsgpStatus::TsgpOk
            }
            Err(e) => fail(status_of(&e), &e.to_string()),
        }
    })
}

/// Predicts the label of one series (in the training data's original label
/// values). Requires a full model with an embedded classifier.
///
/// # Safety
/// `series` must point to `series_len` doubles, `out_label` to a writable
/// int64.
#[no_mangle]
pub unsafe extern "C" fn tsgp_model_predict(
    model: *const TsgpModel,
    series: *const f64,
    series_len: usize,
    out_label: *mut i64,
) -> TsgpStatus {
    guard(|| {
        if model.is_null() || series.is_null() || out_label.is_null() {
            return fail(TsgpStatus::TsgpErrNullArgument, "null argument");
        }
        let model = unsafe { &*model };
        let Some(full) = &model.full else {
            return fail(
                TsgpStatus::TsgpErrNoClassifier,
                "model document carries no classifier",
            );
        };
        let x = unsafe { std::slice::from_raw_parts(series, series_len) };
        match evaluate_tree(&model.tree, x) {
            Ok(features) => {
                let class = full.classifier.predict_row(&features);
                unsafe { *out_label = full.label_map[class] };
                TsgpStatus::TsgpOk
            }
            Err(e) => fail(status_of(&e), &e.to_string()),
        }
    })
}

/// Inference cost of the feature model under the published counting
/// convention.
///
/// # Safety
/// `out_flops` and `out_peak_bytes` must be writable or null (null skips
/// that output).
#[no_mangle]
pub unsafe extern "C" fn tsgp_model_cost(
    model: *const TsgpModel,
    out_flops: *mut u64,
    out_peak_bytes: *mut u64,
) -> TsgpStatus {
    guard(|| {
        if model.is_null() {
            return fail(TsgpStatus::TsgpErrNullArgument, "null argument");
        }
        let model = unsafe { &*model };
        match cost_report(&model.tree, model.tree.series_length()) {
            Ok(report) => {
                if !out_flops.is_null() {
                    unsafe { *out_flops = report.flops };
                }
                if !out_peak_bytes.is_null() {
                    unsafe { *out_peak_bytes = report.peak_bytes };
                }
                TsgpStatus::TsgpOk
            }
            Err(e) => fail(status_of(&e), &e.to_string()),
        }
    })
}
