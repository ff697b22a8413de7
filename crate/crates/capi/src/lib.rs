//! C ABI over the raterlens core: agreement metrics, cosine similarity,
//! the fallback embedder, text preprocessing, and PCA behind an opaque
//! handle. The header is generated by cbindgen into `include/raterlens.h`.
//!
//! Conventions: every fallible function returns [`rl_status`] and writes
//! results through out-pointers; strings returned by the library must be
//! released with [`rl_string_free`]; `rl_pca` handles with [`rl_pca_free`].

use std::ffi::{c_char, c_int, CStr, CString};

use raterlens::agreement::{nmi, qwk_from_pairs};
use raterlens::corpus::ScoreScale;
use raterlens::embed::{fallback_embed, EmbeddingVector};
use raterlens::reduce::{pca_fit, pca_project, DataMatrix, PcaModel};
use raterlens::similarity::cosine;
use raterlens::textprep::{preprocess, PrepConfig};

/// Result codes for every fallible entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[allow(non_camel_case_types)]
pub enum rl_status {
    RL_OK = 0,
    RL_NULL_POINTER = 1,
    RL_INVALID_ARGUMENT = 2,
    /// Metric undefined for this input (e.g. constant ratings, zero vector).
    RL_DEGENERATE_INPUT = 3,
    RL_NO_CONVERGENCE = 4,
    RL_INVALID_UTF8 = 5,
}

const VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");

/// Library version as a static NUL-terminated string; do not free.
#[no_mangle]
pub extern "C" fn rl_version() -> *const c_char {
    VERSION.as_ptr() as *const c_char
}

unsafe fn slice_pair<'a>(
    xs: *const c_int,
    ys: *const c_int,
    len: usize,
) -> Option<(&'a [c_int], &'a [c_int])> {
    if xs.is_null() || ys.is_null() {
        return None;
    }
    Some((
        std::slice::from_raw_parts(xs, len),
        std::slice::from_raw_parts(ys, len),
    ))
}

/// Quadratic weighted kappa of two paired score arrays on an inclusive
/// integer scale.
///
/// # Safety
/// `xs` and `ys` must point to `len` readable `int` values; `out` must be a
/// valid pointer to one `double`.
#[no_mangle]
pub unsafe extern "C" fn rl_qwk(
    xs: *const c_int,
    ys: *const c_int,
    len: usize,
    min_score: c_int,
    max_score: c_int,
    out: *mut f64,
) -> rl_status {
    if out.is_null() {
        return rl_status::RL_NULL_POINTER;
    }
    let Some((xs, ys)) = slice_pair(xs, ys, len) else {
        return rl_status::RL_NULL_POINTER;
    };
    let Ok(scale) = ScoreScale::new(min_score, max_score) else {
        return rl_status::RL_INVALID_ARGUMENT;
    };
    let pairs: Vec<(i32, i32)> = xs.iter().zip(ys).map(|(&a, &b)| (a, b)).collect();
    match qwk_from_pairs(&pairs, &scale) {
        Ok(value) => {
            *out = value;
            rl_status::RL_OK
        }
        Err(raterlens::agreement::AgreementError::UndefinedQwk) => rl_status::RL_DEGENERATE_INPUT,
        Err(_) => rl_status::RL_INVALID_ARGUMENT,
    }
}

/// Normalized mutual information of two paired score arrays, in `[0, 1]`.
///
/// # Safety
/// `xs` and `ys` must point to `len` readable `int` values; `out` must be a
/// valid pointer to one `double`.
#[no_mangle]
pub unsafe extern "C" fn rl_nmi(
    xs: *const c_int,
    ys: *const c_int,
    len: usize,
    out: *mut f64,
) -> rl_status {
    if out.is_null() {
        return rl_status::RL_NULL_POINTER;
    }
    let Some((xs, ys)) = slice_pair(xs, ys, len) else {
        return rl_status::RL_NULL_POINTER;
    };
    let pairs: Vec<(i32, i32)> = xs.iter().zip(ys).map(|(&a, &b)| (a, b)).collect();
    match nmi(&pairs) {
        Ok(value) => {
            *out = value;
            rl_status::RL_OK
        }
        Err(_) => rl_status::RL_INVALID_ARGUMENT,
    }
}

/// Cosine similarity of two vectors of dimension `dim`, clamped to [-1, 1].
///
/// # Safety
/// `u` and `v` must point to `dim` readable `double` values; `out` must be
/// a valid pointer to one `double`.
#[no_mangle]
pub unsafe extern "C" fn rl_cosine(
    u: *const f64,
    v: *const f64,
    dim: usize,
    out: *mut f64,
) -> rl_status {
    if u.is_null() || v.is_null() || out.is_null() {
        return rl_status::RL_NULL_POINTER;
    }
    let us = std::slice::from_raw_parts(u, dim);
    let vs = std::slice::from_raw_parts(v, dim);
    let (Ok(uv), Ok(vv)) = (
        EmbeddingVector::new(us.to_vec()),
        EmbeddingVector::new(vs.to_vec()),
    ) else {
        return rl_status::RL_INVALID_ARGUMENT;
    };
    match cosine(&uv, &vv) {
        Ok(value) => {
            *out = value;
            rl_status::RL_OK
        }
        Err(raterlens::similarity::SimilarityError::ZeroNorm) => rl_status::RL_DEGENERATE_INPUT,
        Err(_) => rl_status::RL_INVALID_ARGUMENT,
    }
}

/// Deterministic feature-hashed embedding of NUL-terminated UTF-8 text.
/// Writes `dim` doubles into `out`.
///
/// # Safety
/// `text` must be a valid NUL-terminated string; `out` must point to `dim`
/// writable `double` values.
#[no_mangle]
pub unsafe extern "C" fn rl_fallback_embed(
    text: *const c_char,
    dim: usize,
    out: *mut f64,
) -> rl_status {
    if text.is_null() || out.is_null() {
        return rl_status::RL_NULL_POINTER;
    }
    let Ok(text) = CStr::from_ptr(text).to_str() else {
        return rl_status::RL_INVALID_UTF8;
    };
    match fallback_embed(text, dim) {
        Ok(vector) => {
            std::ptr::copy_nonoverlapping(vector.values().as_ptr(), out, dim);
            rl_status::RL_OK
        }
        Err(raterlens::embed::EmbedError::DimTooSmall(_)) => rl_status::RL_INVALID_ARGUMENT,
        Err(_) => rl_status::RL_DEGENERATE_INPUT,
    }
}

/// Run the default preprocessing pipeline over NUL-terminated UTF-8 text.
/// Returns a newly allocated string (free with [`rl_string_free`]) or NULL
/// on invalid input.
///
/// # Safety
/// `text` must be a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn rl_preprocess(text: *const c_char) -> *mut c_char {
    if text.is_null() {
        return std::ptr::null_mut();
    }
    let Ok(text) = CStr::from_ptr(text).to_str() else {
        return std::ptr::null_mut();
    };
    let clean = preprocess(text, &PrepConfig::default_english());
    // Cleaned text is printable ASCII, so no interior NULs are possible.
    CString::new(clean.into_string())
        .map(CString::into_raw)
        .unwrap_or(std::ptr::null_mut())
}

/// Release a string allocated by this library.
///
/// # Safety
/// `s` must be a pointer previously returned by [`rl_preprocess`], not yet
/// freed, or NULL.
#[no_mangle]
pub unsafe extern "C" fn rl_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Opaque fitted PCA model.
#[allow(non_camel_case_types)]
pub struct rl_pca {
    model: PcaModel,
}

/// Fit a `k`-component PCA on `n` row-major observations of dimension `d`.
/// Returns NULL on failure and writes the reason to `status` when given.
///
/// # Safety
/// `data` must point to `n * d` readable `double` values; `status` may be
/// NULL or point to one writable `rl_status`.
#[no_mangle]
pub unsafe extern "C" fn rl_pca_fit(
    data: *const f64,
    n: usize,
    d: usize,
    k: usize,
    status: *mut rl_status,
) -> *mut rl_pca {
    let set_status = |code: rl_status| {
        if !status.is_null() {
            *status = code;
        }
    };
    if data.is_null() {
        set_status(rl_status::RL_NULL_POINTER);
        return std::ptr::null_mut();
    }
    if n == 0 || d == 0 {
        set_status(rl_status::RL_INVALID_ARGUMENT);
        return std::ptr::null_mut();
    }
    let flat = std::slice::from_raw_parts(data, n * d);
    let rows: Vec<Vec<f64>> = flat.chunks(d).map(|c| c.to_vec()).collect();
    let matrix = match DataMatrix::from_rows(rows) {
        Ok(m) => m,
        Err(_) => {
            set_status(rl_status::RL_INVALID_ARGUMENT);
            return std::ptr::null_mut();
        }
    };
    match pca_fit(&matrix, k) {
        Ok(model) => {
            set_status(rl_status::RL_OK);
            Box::into_raw(Box::new(rl_pca { model }))
        }
        Err(raterlens::reduce::ReduceError::NoConvergence(_)) => {
            set_status(rl_status::RL_NO_CONVERGENCE);
            std::ptr::null_mut()
        }
        Err(_) => {
            set_status(rl_status::RL_INVALID_ARGUMENT);
            std::ptr::null_mut()
        }
    }
}

/// Number of fitted components.
///
/// # Safety
/// `handle` must be a live pointer from [`rl_pca_fit`] or NULL.
#[no_mangle]
pub unsafe extern "C" fn rl_pca_component_count(handle: *const rl_pca) -> usize {
    if handle.is_null() {
        return 0;
    }
    let model = &(*handle).model;
    model.k()
}

/// Eigenvalue of one fitted component (descending order).
///
/// # Safety
/// `handle` must be a live pointer from [`rl_pca_fit`]; `out` must point to
/// one writable `double`.
#[no_mangle]
pub unsafe extern "C" fn rl_pca_eigenvalue(
    handle: *const rl_pca,
    index: usize,
    out: *mut f64,
) -> rl_status {
    if handle.is_null() || out.is_null() {
        return rl_status::RL_NULL_POINTER;
    }
    let model = &(*handle).model;
    match model.eigenvalues.get(index) {
        Some(&value) => {
            *out = value;
            rl_status::RL_OK
        }
        None => rl_status::RL_INVALID_ARGUMENT,
    }
}

/// Project `n` row-major observations of dimension `d` onto the fitted
/// components, writing `n * k` doubles into `out`.
///
/// # Safety
/// `handle` must be a live pointer from [`rl_pca_fit`]; `rows` must point
/// to `n * d` readable doubles and `out` to `n * k` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn rl_pca_project(
    handle: *const rl_pca,
    rows: *const f64,
    n: usize,
    d: usize,
    out: *mut f64,
) -> rl_status {
    if handle.is_null() || rows.is_null() || out.is_null() {
        return rl_status::RL_NULL_POINTER;
    }
    if n == 0 || d == 0 {
        return rl_status::RL_INVALID_ARGUMENT;
    }
    let flat = std::slice::from_raw_parts(rows, n * d);
    let rows: Vec<Vec<f64>> = flat.chunks(d).map(|c| c.to_vec()).collect();
    let matrix = match DataMatrix::from_rows(rows) {
        Ok(m) => m,
        Err(_) => return rl_status::RL_INVALID_ARGUMENT,
    };
    let model = &(*handle).model;
    match pca_project(model, &matrix) {
        Ok(coords) => {
            let k = model.k();
            for (i, row) in coords.iter().enumerate() {
                std::ptr::copy_nonoverlapping(row.as_ptr(), out.add(i * k), k);
            }
            rl_status::RL_OK
        }
        Err(_) => rl_status::RL_INVALID_ARGUMENT,
    }
}

/// Release a PCA handle.
///
/// # Safety
/// `handle` must be a pointer from [`rl_pca_fit`], not yet freed, or NULL.
#[no_mangle]
pub unsafe extern "C" fn rl_pca_free(handle: *mut rl_pca) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn version_is_nul_terminated() {
        unsafe {
            let v = CStr::from_ptr(rl_version());
            assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
        }
    }

    #[test]
    fn qwk_round_trip() {
        let xs = [1, 2, 3, 4];
        let ys = [2, 3, 4, 5];
        let mut out = 0.0;
        let status = unsafe { rl_qwk(xs.as_ptr(), ys.as_ptr(), 4, 0, 6, &mut out) };
        assert_eq!(status, rl_status::RL_OK);
        assert!((out - 5.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn qwk_error_codes() {
        let xs = [3, 3];
        let ys = [3, 3];
        let mut out = 0.0;
        let status = unsafe { rl_qwk(xs.as_ptr(), ys.as_ptr(), 2, 0, 6, &mut out) };
        assert_eq!(status, rl_status::RL_DEGENERATE_INPUT);
        let status = unsafe { rl_qwk(std::ptr::null(), ys.as_ptr(), 2, 0, 6, &mut out) };
        assert_eq!(status, rl_status::RL_NULL_POINTER);
        let status = unsafe { rl_qwk(xs.as_ptr(), ys.as_ptr(), 2, 6, 0, &mut out) };
        assert_eq!(status, rl_status::RL_INVALID_ARGUMENT);
    }

    #[test]
    fn nmi_and_cosine() {
        let xs = [0, 0, 1, 1];
        let ys = [1, 1, 0, 0];
        let mut out = 0.0;
        assert_eq!(
            unsafe { rl_nmi(xs.as_ptr(), ys.as_ptr(), 4, &mut out) },
            rl_status::RL_OK
        );
        assert!((out - 1.0).abs() < 1e-12);

        let u = [1.0, 2.0, 2.0];
        let v = [2.0, 1.0, 2.0];
        assert_eq!(
            unsafe { rl_cosine(u.as_ptr(), v.as_ptr(), 3, &mut out) },
            rl_status::RL_OK
        );
        assert!((out - 8.0 / 9.0).abs() < 1e-12);

        let zero = [0.0, 0.0, 0.0];
        assert_eq!(
            unsafe { rl_cosine(u.as_ptr(), zero.as_ptr(), 3, &mut out) },
            rl_status::RL_DEGENERATE_INPUT
        );
    }

    #[test]
    fn preprocess_and_free() {
        let input = CString::new("Overall, the student writes well. 很好").unwrap();
        unsafe {
            let out = rl_preprocess(input.as_ptr());
            assert!(!out.is_null());
            assert_eq!(CStr::from_ptr(out).to_str().unwrap(), "writes well");
            rl_string_free(out);
        }
    }

    #[test]
    fn fallback_embed_unit_norm() {
        let text = CString::new("alpha beta gamma").unwrap();
        let mut out = vec![0.0f64; 64];
        let status = unsafe { rl_fallback_embed(text.as_ptr(), 64, out.as_mut_ptr()) };
        assert_eq!(status, rl_status::RL_OK);
        let norm: f64 = out.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-9);
    }

    #[test]
    fn pca_handle_lifecycle() {
        // 4 points in 2-D along y = x
        let data = [0.0, 0.0, 1.0, 1.0, 2.0, 2.0, 3.0, 3.0];
        let mut status = rl_status::RL_OK;
        unsafe {
            let handle = rl_pca_fit(data.as_ptr(), 4, 2, 2, &mut status);
            assert_eq!(status, rl_status::RL_OK);
            assert!(!handle.is_null());
            assert_eq!(rl_pca_component_count(handle), 2);
            let mut lambda = -1.0;
            assert_eq!(rl_pca_eigenvalue(handle, 1, &mut lambda), rl_status::RL_OK);
            assert!(lambda.abs() < 1e-10, "rank-1 data has a zero second eigenvalue");
            let mut coords = vec![0.0f64; 8];
            assert_eq!(
                rl_pca_project(handle, data.as_ptr(), 4, 2, coords.as_mut_ptr()),
                rl_status::RL_OK
            );
            // second coordinate vanishes on rank-1 data
            for i in 0..4 {
                assert!(coords[i * 2 + 1].abs() < 1e-8);
            }
            rl_pca_free(handle);
        }
        // invalid k
        unsafe {
            let handle = rl_pca_fit(data.as_ptr(), 4, 2, 5, &mut status);
            assert!(handle.is_null());
            assert_eq!(status, rl_status::RL_INVALID_ARGUMENT);
        }
    }
}
