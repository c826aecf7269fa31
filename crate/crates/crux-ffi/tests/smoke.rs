//! Exercises the C ABI through the extern "C" entry points, including the
//! error-code paths a foreign caller depends on.

use std::ffi::{CStr, CString};

use crux_core::fusion::{mlp_train, TrainConfig, TrainExample};
use crux_ffi::*;

fn last_error() -> String {
    unsafe {
        CStr::from_ptr(crux_last_error_message())
            .to_string_lossy()
            .into_owned()
    }
}

#[test]
fn version_is_non_empty() {
    let v = unsafe { CStr::from_ptr(crux_version()) };
    assert!(!v.to_bytes().is_empty());
}

#[test]
fn entropy_matches_core_values() {
    let probs = [0.7, 0.2, 0.1];
    let mut out = 0.0;
    let status = unsafe { crux_entropy(probs.as_ptr(), probs.len(), &mut out) };
    assert_eq!(status, CruxStatus::Ok);
    assert!((out - 0.8018185525433374).abs() < 1e-12);
}

#[test]
fn entropy_rejects_null_and_bad_distributions() {
    let mut out = 0.0;
    let status = unsafe { crux_entropy(std::ptr::null(), 3, &mut out) };
    assert_eq!(status, CruxStatus::NullArgument);
    assert!(last_error().contains("null"));

    let probs = [0.7, 0.7];
    let status = unsafe { crux_entropy(probs.as_ptr(), probs.len(), &mut out) };
    assert_eq!(status, CruxStatus::InvalidArgument);
    assert!(last_error().contains("sum"));
}

#[test]
fn entropy_reduction_is_antisymmetric_across_ffi() {
    let q = [0.1; 10];
    let cq = [1.0];
    let mut forward = 0.0;
    let mut backward = 0.0;
    unsafe {
        assert_eq!(
            crux_entropy_reduction(q.as_ptr(), 10, cq.as_ptr(), 1, &mut forward),
            CruxStatus::Ok
        );
        assert_eq!(
            crux_entropy_reduction(cq.as_ptr(), 1, q.as_ptr(), 10, &mut backward),
            CruxStatus::Ok
        );
    }
    assert!((forward - 10f64.ln()).abs() < 1e-9);
    assert_eq!(forward, -backward);
}

fn offdiag_matrix(m: usize, s: f64) -> Vec<f64> {
    let mut w = vec![s; m * m];
    for i in 0..m {
        w[i * m + i] = 1.0;
    }
    w
}

#[test]
fn gc_values_match_closed_forms() {
    let w = offdiag_matrix(2, 0.6);
    let mut out = 0.0;
    unsafe {
        assert_eq!(crux_gc_pairwise(w.as_ptr(), 2, &mut out), CruxStatus::Ok);
    }
    assert!((out + 0.4).abs() < 1e-12);

    let w = offdiag_matrix(2, 0.0);
    unsafe {
        assert_eq!(crux_gc_center(w.as_ptr(), 2, &mut out), CruxStatus::Ok);
    }
    assert!((out + 0.5).abs() < 1e-12);
}

#[test]
fn gc_rejects_asymmetric_matrices() {
    let w = [1.0, 0.5, 0.4, 1.0];
    let mut out = 0.0;
    let status = unsafe { crux_gc_pairwise(w.as_ptr(), 2, &mut out) };
    assert_eq!(status, CruxStatus::InvalidArgument);
    assert!(last_error().contains("asymmetric"));
}

#[test]
fn laplacian_spectrum_of_all_ones() {
    let w = offdiag_matrix(4, 1.0);
    let mut out = [0.0; 4];
    let status = unsafe { crux_laplacian_eigenvalues(w.as_ptr(), 4, out.as_mut_ptr()) };
    assert_eq!(status, CruxStatus::Ok);
    let expected = [0.0, 1.0, 1.0, 1.0];
    for (got, want) in out.iter().zip(expected) {
        assert!((got - want).abs() < 1e-9);
    }
}

#[test]
fn auroc_worked_instance_and_single_class() {
    let scores = [0.9, 0.8, 0.4, 0.3];
    let labels = [1u8, 0, 1, 0];
    let mut out = 0.0;
    unsafe {
        assert_eq!(
            crux_auroc(scores.as_ptr(), labels.as_ptr(), 4, &mut out),
            CruxStatus::Ok
        );
    }
    assert_eq!(out, 0.75);

    let ones = [1u8, 1, 1, 1];
    let status = unsafe { crux_auroc(scores.as_ptr(), ones.as_ptr(), 4, &mut out) };
    assert_eq!(status, CruxStatus::InvalidArgument);
    assert!(last_error().contains("classes"));
}

#[test]
fn normalize_answer_round_trip() {
    let raw = CString::new("  The  Pacific. ").unwrap();
    let normalized = unsafe { crux_normalize_answer(raw.as_ptr()) };
    assert!(!normalized.is_null());
    let text = unsafe { CStr::from_ptr(normalized) }.to_string_lossy().into_owned();
    assert_eq!(text, "the pacific");
    unsafe { crux_string_free(normalized) };

    assert!(unsafe { crux_normalize_answer(std::ptr::null()) }.is_null());
}

#[test]
fn fusion_handle_lifecycle() {
    // Train a small head in-process and hand it over the ABI as JSON.
    let data: Vec<TrainExample> = (0..20)
        .map(|i| TrainExample {
            features: vec![if i % 2 == 0 { 2.0 } else { 0.0 }, -(i as f64) * 0.01],
            label: i % 2 == 0,
        })
        .collect();
    let params = mlp_train(&data, &TrainConfig::default()).unwrap();
    let json = CString::new(serde_json::to_string(&params).unwrap()).unwrap();

    let handle = unsafe { crux_fusion_from_json(json.as_ptr()) };
    assert!(!handle.is_null(), "{}", last_error());
    assert_eq!(unsafe { crux_fusion_feature_count(handle) }, 2);

    let features = [2.0, -0.05];
    let mut conf = 0.0;
    let status = unsafe { crux_fusion_forward(handle, features.as_ptr(), 2, &mut conf) };
    assert_eq!(status, CruxStatus::Ok);
    assert!(conf > 0.0 && conf < 1.0);

    // Dimension mismatch is reported, not UB.
    let too_short = [1.0];
    let status = unsafe { crux_fusion_forward(handle, too_short.as_ptr(), 1, &mut conf) };
    assert_eq!(status, CruxStatus::InvalidArgument);

    unsafe { crux_fusion_free(handle) };

    // Bad JSON yields null plus a message.
    let bad = CString::new("{not json").unwrap();
    assert!(unsafe { crux_fusion_from_json(bad.as_ptr()) }.is_null());
    assert!(!last_error().is_empty());
}

#[test]
fn fusion_load_file_missing_path_sets_error() {
    let path = CString::new("/definitely/missing/fusion.json").unwrap();
    let handle = unsafe { crux_fusion_load_file(path.as_ptr()) };
    assert!(handle.is_null());
    assert!(last_error().contains("fusion parameters"));
}

#[test]
fn generated_header_exists_and_declares_the_abi() {
    let header = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("include/crux.h");
    let text = std::fs::read_to_string(&header).expect("cbindgen header present");
    for symbol in [
        "crux_entropy",
        "crux_entropy_reduction",
        "crux_gc_pairwise",
        "crux_gc_center",
        "crux_laplacian_eigenvalues",
        "crux_auroc",
        "crux_normalize_answer",
        "crux_string_free",
        "crux_fusion_load_file",
        "crux_fusion_from_json",
        "crux_fusion_forward",
        "crux_fusion_feature_count",
        "crux_fusion_free",
        "crux_last_error_message",
        "crux_version",
        "CruxStatus",
        "CruxFusion",
    ] {
        assert!(text.contains(symbol), "header missing {symbol}");
    }
}
