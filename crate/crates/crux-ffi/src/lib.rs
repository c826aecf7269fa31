//! C ABI over the confidence-estimation core.
//!
//! Conventions:
//! - Functions return [`CruxStatus`]; `CRUX_STATUS_OK` (0) means success and
//!   outputs were written. On any other status, call
//!   [`crux_last_error_message`] for a human-readable reason (thread-local,
//!   valid until the next failing call on the same thread).
//! - Matrices are row-major `m x m` similarity matrices with unit diagonals.
//! - The fusion head is an opaque handle created from its JSON file or an
//!   in-memory JSON string and freed with [`crux_fusion_free`].

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::os::raw::c_char;
use std::path::Path;

use crux_core::clustering::ClusterDistribution;
use crux_core::consistency::{gc_center, gc_pairwise, SimilarityMatrix};
use crux_core::entropy::{entropy, entropy_reduction};
use crux_core::error::CruxError;
use crux_core::eval::auroc;
use crux_core::fusion::{mlp_forward, FusionParams};
use crux_core::pipeline::normalize_answer;
use crux_core::spectral::laplacian_eigenvalues;

/// Result codes for every fallible entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CruxStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// Arguments violated a precondition (sizes, ranges, classes).
    InvalidArgument = 2,
    /// A file or JSON payload failed to parse.
    ParseError = 3,
    /// Filesystem failure.
    IoError = 4,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(message: &str) {
    let sanitized = message.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn status_for(err: &CruxError) -> CruxStatus {
    match err {
        CruxError::FileUnreadable { .. } | CruxError::Io(_) => CruxStatus::IoError,
        CruxError::MissingFusionParams(_) | CruxError::SchemaMismatch(_) => CruxStatus::ParseError,
        _ => CruxStatus::InvalidArgument,
    }
}

fn fail(err: &CruxError) -> CruxStatus {
    set_error(&err.to_string());
    status_for(err)
}

fn fail_null(what: &str) -> CruxStatus {
    set_error(&format!("{what} must not be null"));
    CruxStatus::NullArgument
}

/// Library version as a static C string.
#[no_mangle]
pub extern "C" fn crux_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message for the most recent failure on this thread. Never null; empty
/// until a failure occurs. The pointer is valid until the next failing call
/// on the same thread.
#[no_mangle]
pub extern "C" fn crux_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

unsafe fn slice_arg<'a>(ptr: *const f64, len: usize) -> Option<&'a [f64]> {
    if ptr.is_null() {
        None
    } else {
        Some(std::slice::from_raw_parts(ptr, len))
    }
}

/// Shannon entropy (nats) of a cluster probability distribution.
///
/// # Safety
/// `probs` must point to `len` readable doubles and `out` to a writable
/// double.
#[no_mangle]
pub unsafe extern "C" fn crux_entropy(probs: *const f64, len: usize, out: *mut f64) -> CruxStatus {
    if out.is_null() {
        return fail_null("out");
    }
    let Some(probs) = slice_arg(probs, len) else {
        return fail_null("probs");
    };
    let dist = match ClusterDistribution::new(probs.to_vec()) {
        Ok(d) => d,
        Err(e) => return fail(&e),
    };
    match entropy(&dist) {
        Ok(h) => {
            *out = h;
            CruxStatus::Ok
        }
        Err(e) => fail(&e),
    }
}

/// Entropy reduction H(context-free) - H(with-context) between two cluster
/// distributions, in nats.
///
/// # Safety
/// Both probability arrays must be readable for their stated lengths and
/// `out` writable.
#[no_mangle]
pub unsafe extern "C" fn crux_entropy_reduction(
    context_free: *const f64,
    context_free_len: usize,
    with_context: *const f64,
    with_context_len: usize,
    out: *mut f64,
) -> CruxStatus {
    if out.is_null() {
        return fail_null("out");
    }
    let (Some(q), Some(cq)) = (
        slice_arg(context_free, context_free_len),
        slice_arg(with_context, with_context_len),
    ) else {
        return fail_null("probability arrays");
    };
    let dist_q = match ClusterDistribution::new(q.to_vec()) {
        Ok(d) => d,
        Err(e) => return fail(&e),
    };
    let dist_cq = match ClusterDistribution::new(cq.to_vec()) {
        Ok(d) => d,
        Err(e) => return fail(&e),
    };
    match entropy_reduction(&dist_q, &dist_cq) {
        Ok(v) => {
            *out = v;
            CruxStatus::Ok
        }
        Err(e) => fail(&e),
    }
}

unsafe fn similarity_arg(w: *const f64, m: usize) -> Result<SimilarityMatrix, CruxStatus> {
    let Some(entries) = slice_arg(w, m.saturating_mul(m)) else {
        return Err(fail_null("matrix"));
    };
    SimilarityMatrix::new(m, entries.to_vec()).map_err(|e| fail(&e))
}

/// Pairwise unified consistency over a pooled `m x m` similarity matrix
/// (`m = 2n`). Value lies in [-1, 0].
///
/// # Safety
/// `w` must point to `m*m` readable doubles and `out` to a writable double.
#[no_mangle]
pub unsafe extern "C" fn crux_gc_pairwise(w: *const f64, m: usize, out: *mut f64) -> CruxStatus {
    if out.is_null() {
        return fail_null("out");
    }
    let matrix = match similarity_arg(w, m) {
        Ok(matrix) => matrix,
        Err(status) => return status,
    };
    match gc_pairwise(&matrix) {
        Ok(v) => {
            *out = v;
            CruxStatus::Ok
        }
        Err(e) => fail(&e),
    }
}

/// Center (medoid) unified consistency over an `m x m` similarity matrix.
///
/// # Safety
/// `w` must point to `m*m` readable doubles and `out` to a writable double.
#[no_mangle]
pub unsafe extern "C" fn crux_gc_center(w: *const f64, m: usize, out: *mut f64) -> CruxStatus {
    if out.is_null() {
        return fail_null("out");
    }
    let matrix = match similarity_arg(w, m) {
        Ok(matrix) => matrix,
        Err(status) => return status,
    };
    match gc_center(&matrix) {
        Ok(v) => {
            *out = v;
            CruxStatus::Ok
        }
        Err(e) => fail(&e),
    }
}

/// Ascending eigenvalues of the normalized graph Laplacian of `w`, written
/// to `out` (length `m`).
///
/// # Safety
/// `w` must point to `m*m` readable doubles and `out` to `m` writable
/// doubles.
#[no_mangle]
pub unsafe extern "C" fn crux_laplacian_eigenvalues(
    w: *const f64,
    m: usize,
    out: *mut f64,
) -> CruxStatus {
    if out.is_null() {
        return fail_null("out");
    }
    let matrix = match similarity_arg(w, m) {
        Ok(matrix) => matrix,
        Err(status) => return status,
    };
    match laplacian_eigenvalues(&matrix) {
        Ok(values) => {
            std::ptr::copy_nonoverlapping(values.as_ptr(), out, m);
            CruxStatus::Ok
        }
        Err(e) => fail(&e),
    }
}

/// AUROC of `scores` against binary `labels` (0/1), via the exact
/// Mann-Whitney estimator. Requires both classes present.
///
/// # Safety
/// `scores` must point to `len` readable doubles, `labels` to `len` readable
/// bytes, and `out` to a writable double.
#[no_mangle]
pub unsafe extern "C" fn crux_auroc(
    scores: *const f64,
    labels: *const u8,
    len: usize,
    out: *mut f64,
) -> CruxStatus {
    if out.is_null() {
        return fail_null("out");
    }
    let Some(scores) = slice_arg(scores, len) else {
        return fail_null("scores");
    };
    if labels.is_null() {
        return fail_null("labels");
    }
    let labels: Vec<bool> = std::slice::from_raw_parts(labels, len)
        .iter()
        .map(|&b| b != 0)
        .collect();
    match auroc(scores, &labels) {
        Ok(v) => {
            *out = v;
            CruxStatus::Ok
        }
        Err(e) => fail(&e),
    }
}

/// Canonical answer normalization (lowercase, whitespace collapse, trailing
/// sentence punctuation stripped). Returns a newly allocated C string, or
/// null on invalid UTF-8 / null input. Free with [`crux_string_free`].
///
/// # Safety
/// `raw` must be a valid NUL-terminated C string or null.
#[no_mangle]
pub unsafe extern "C" fn crux_normalize_answer(raw: *const c_char) -> *mut c_char {
    if raw.is_null() {
        set_error("raw must not be null");
        return std::ptr::null_mut();
    }
    let Ok(text) = CStr::from_ptr(raw).to_str() else {
        set_error("raw is not valid UTF-8");
        return std::ptr::null_mut();
    };
    CString::new(normalize_answer(text))
        .map(CString::into_raw)
        .unwrap_or(std::ptr::null_mut())
}

/// Frees a string allocated by this library.
///
/// # Safety
/// `s` must be null or a pointer previously returned by
/// [`crux_normalize_answer`] that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn crux_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Opaque trained fusion head.
pub struct CruxFusion {
    params: FusionParams,
}

/// Loads fusion parameters from their JSON file. Returns null on failure
/// (see [`crux_last_error_message`]).
///
/// # Safety
/// `path` must be a valid NUL-terminated C string.
#[no_mangle]
pub unsafe extern "C" fn crux_fusion_load_file(path: *const c_char) -> *mut CruxFusion {
    if path.is_null() {
        set_error("path must not be null");
        return std::ptr::null_mut();
    }
    let Ok(path) = CStr::from_ptr(path).to_str() else {
        set_error("path is not valid UTF-8");
        return std::ptr::null_mut();
    };
    match FusionParams::load(Path::new(path)) {
        Ok(params) => Box::into_raw(Box::new(CruxFusion { params })),
        Err(e) => {
            set_error(&e.to_string());
            std::ptr::null_mut()
        }
    }
}

/// Parses fusion parameters from a JSON string. Returns null on failure.
///
/// # Safety
/// `json` must be a valid NUL-terminated C string.
#[no_mangle]
pub unsafe extern "C" fn crux_fusion_from_json(json: *const c_char) -> *mut CruxFusion {
    if json.is_null() {
        set_error("json must not be null");
        return std::ptr::null_mut();
    }
    let Ok(json) = CStr::from_ptr(json).to_str() else {
        set_error("json is not valid UTF-8");
        return std::ptr::null_mut();
    };
    let params: FusionParams = match serde_parse(json) {
        Ok(p) => p,
        Err(message) => {
            set_error(&message);
            return std::ptr::null_mut();
        }
    };
    Box::into_raw(Box::new(CruxFusion { params }))
}

fn serde_parse(json: &str) -> Result<FusionParams, String> {
    let params: FusionParams =
        crux_core::fusion::params_from_json(json).map_err(|e| e.to_string())?;
    Ok(params)
}

/// Number of input features the head expects (1 or 2); 0 for null handles.
///
/// # Safety
/// `fusion` must be null or a live handle from a `crux_fusion_*` constructor.
#[no_mangle]
pub unsafe extern "C" fn crux_fusion_feature_count(fusion: *const CruxFusion) -> usize {
    if fusion.is_null() {
        return 0;
    }
    (*fusion).params.features
}

/// Runs the fusion head on a feature vector, writing a confidence in (0, 1).
///
/// # Safety
/// `fusion` must be a live handle, `features` readable for `len` doubles,
/// and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn crux_fusion_forward(
    fusion: *const CruxFusion,
    features: *const f64,
    len: usize,
    out: *mut f64,
) -> CruxStatus {
    if fusion.is_null() {
        return fail_null("fusion");
    }
    if out.is_null() {
        return fail_null("out");
    }
    let Some(features) = slice_arg(features, len) else {
        return fail_null("features");
    };
    match mlp_forward(features, &(*fusion).params) {
        Ok(conf) => {
            *out = conf;
            CruxStatus::Ok
        }
        Err(e) => fail(&e),
    }
}

/// Frees a fusion handle.
///
/// # Safety
/// `fusion` must be null or a live handle that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn crux_fusion_free(fusion: *mut CruxFusion) {
    if !fusion.is_null() {
        drop(Box::from_raw(fusion));
    }
}
