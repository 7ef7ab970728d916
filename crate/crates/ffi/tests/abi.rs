use std::ffi::CStr;
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use paddy_ffi::*;

fn last_error() -> String {
    let needed = unsafe { paddy_last_error_message(ptr::null_mut(), 0) };
    let mut buf = vec![0 as std::ffi::c_char; needed];
    unsafe { paddy_last_error_message(buf.as_mut_ptr(), buf.len()) };
    unsafe { CStr::from_ptr(buf.as_ptr()) }.to_string_lossy().into_owned()
}

fn rect(x1: f64, y1: f64, x2: f64, y2: f64) -> PaddyRect {
    PaddyRect { x1, y1, x2, y2 }
}

#[test]
fn taxonomy_round_trip() {
    assert_eq!(paddy_num_classes(), 13);
    assert_eq!(paddy_num_detection_classes(), 12);
    for i in 0..paddy_num_classes() {
        let slug = paddy_class_slug(i);
        let mut back = usize::MAX;
        assert_eq!(unsafe { paddy_class_index(slug, &mut back) }, PaddyStatus::Ok);
        assert_eq!(back, i);
    }
    assert!(paddy_class_slug(13).is_null());
    let mut idx = 0;
    assert_eq!(unsafe { paddy_class_index(c"weeds".as_ptr(), &mut idx) }, PaddyStatus::NotFound);
    assert!(last_error().contains("weeds"));
    assert_eq!(unsafe { paddy_detection_to_class(9, &mut idx) }, PaddyStatus::Ok);
    assert_eq!(unsafe { CStr::from_ptr(paddy_class_slug(idx)) }.to_str().unwrap(), "tungro");
}

#[test]
fn iou_and_cross_entropy() {
    let mut v = 0.0;
    let a = rect(0.0, 0.0, 2.0, 2.0);
    let b = rect(1.0, 1.0, 3.0, 3.0);
    assert_eq!(unsafe { paddy_iou(&a, &b, &mut v) }, PaddyStatus::Ok);
    assert!((v - 1.0 / 7.0).abs() < 1e-12);
    assert_eq!(unsafe { paddy_iou(&a, ptr::null(), &mut v) }, PaddyStatus::NullPointer);

    let probs = [0.8, 0.2, 0.4, 0.6];
    let labels = [0usize, 1];
    assert_eq!(unsafe { paddy_cross_entropy(probs.as_ptr(), 2, 2, labels.as_ptr(), &mut v) }, PaddyStatus::Ok);
    assert!((v - -(0.8f64.ln() + 0.6f64.ln()) / 2.0).abs() < 1e-12);
    let bad = [0.5, 0.4];
    assert_eq!(unsafe { paddy_cross_entropy(bad.as_ptr(), 1, 2, labels.as_ptr(), &mut v) }, PaddyStatus::InvalidInput);
}

#[test]
fn classification_summary_matches_hand_counts() {
    // truth rows: class 0 -> 3 right 1 wrong, class 1 -> 2 right
    let cm = [3u64, 1, 0, 2];
    let mut s = PaddyClassificationSummary::default();
    assert_eq!(unsafe { paddy_classification_summary(cm.as_ptr(), 2, &mut s) }, PaddyStatus::Ok);
    assert!((s.accuracy - 5.0 / 6.0).abs() < 1e-12);
    let (p0, r0, p1, r1) = (1.0, 0.75, 2.0 / 3.0, 1.0);
    assert!((s.macro_precision - (p0 + p1) / 2.0).abs() < 1e-12);
    assert!((s.macro_recall - (r0 + r1) / 2.0).abs() < 1e-12);
}

#[test]
fn nms_suppresses_same_class_overlaps() {
    let d = |class_index, confidence, cx| PaddyDetection { class_index, confidence, cx, cy: 0.5, w: 0.2, h: 0.2 };
    let dets = [d(1, 0.6, 0.51), d(1, 0.9, 0.5), d(2, 0.5, 0.5), d(1, 0.4, 0.9)];
    let mut out = [d(0, 0.0, 0.5); 4];
    let mut n = 0;
    assert_eq!(unsafe { paddy_nms(dets.as_ptr(), 4, 0.5, out.as_mut_ptr(), 4, &mut n) }, PaddyStatus::Ok);
    assert_eq!(n, 3);
    assert_eq!(&out[..3], &[d(1, 0.9, 0.5), d(2, 0.5, 0.5), d(1, 0.4, 0.9)]);
    assert_eq!(unsafe { paddy_nms(dets.as_ptr(), 4, 0.5, out.as_mut_ptr(), 1, &mut n) }, PaddyStatus::BufferTooSmall);
    assert_eq!(n, 3);
}

#[test]
fn evaluator_handle_lifecycle() {
    let mut ev: *mut PaddyDetectionEvaluator = ptr::null_mut();
    assert_eq!(unsafe { paddy_evaluator_new(2, 0.5, &mut ev) }, PaddyStatus::Ok);
    let gts = [PaddyGroundTruth { class_index: 0, rect: rect(0.0, 0.0, 0.5, 0.5) }];
    let preds = [
        PaddyScoredBox { class_index: 0, confidence: 0.9, rect: rect(0.6, 0.6, 0.9, 0.9) },
        PaddyScoredBox { class_index: 0, confidence: 0.8, rect: rect(0.0, 0.0, 0.5, 0.5) },
    ];
    assert_eq!(unsafe { paddy_evaluator_add_image(ev, preds.as_ptr(), 2, gts.as_ptr(), 1) }, PaddyStatus::Ok);
    let mut s = PaddyDetectionSummary::default();
    assert_eq!(unsafe { paddy_evaluator_compute(ev, &mut s) }, PaddyStatus::Ok);
    assert_eq!(s.classes_evaluated, 1);
    assert!((s.map - 0.5).abs() < 1e-12);
    assert!((s.mean_box_precision - 0.5).abs() < 1e-12);
    let mut ap = 0.0;
    assert_eq!(unsafe { paddy_evaluator_class_ap(ev, 1, &mut ap) }, PaddyStatus::NotFound);
    unsafe { paddy_evaluator_free(ev) };
    unsafe { paddy_evaluator_free(ptr::null_mut()) };
    assert_eq!(unsafe { paddy_evaluator_compute(ptr::null(), &mut s) }, PaddyStatus::NullPointer);
}

const C_PROGRAM: &str = r#"
#include <stdio.h>
#include <string.h>
#include "paddy.h"

int main(void) {
    PaddyRect a = {0.0, 0.0, 2.0, 2.0}, b = {1.0, 1.0, 3.0, 3.0};
    double v = 0.0;
    if (paddy_iou(&a, &b, &v) != PADDY_STATUS_OK) return 1;
    if (v < 0.1428 || v > 0.1429) return 2;
    if (strcmp(paddy_class_slug(9), "normal") != 0) return 3;
    PaddyDetectionEvaluator *ev = NULL;
    if (paddy_evaluator_new(12, 0.5, &ev) != PADDY_STATUS_OK) return 4;
    PaddyGroundTruth gt = {3, {0.1, 0.1, 0.4, 0.4}};
    PaddyScoredBox p = {3, 0.7, {0.1, 0.1, 0.4, 0.4}};
    if (paddy_evaluator_add_image(ev, &p, 1, &gt, 1) != PADDY_STATUS_OK) return 5;
    PaddyDetectionSummary s;
    if (paddy_evaluator_compute(ev, &s) != PADDY_STATUS_OK || s.map != 1.0) return 6;
    paddy_evaluator_free(ev);
    size_t idx = 0;
    if (paddy_class_index("weeds", &idx) != PADDY_STATUS_NOT_FOUND) return 7;
    char msg[256];
    if (paddy_last_error_message(msg, sizeof msg) == 0 || strstr(msg, "weeds") == NULL) return 8;
    puts("ok");
    return 0;
}
"#;

/// Compiles a C program against the generated header and the static
/// library and runs it.
#[test]
fn c_program_links_against_static_library() {
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let target_dir = std::env::current_exe().unwrap().parent().unwrap().parent().unwrap().to_path_buf();
    let lib = target_dir.join("libpaddy_ffi.a");
    assert!(lib.exists(), "static library missing at {}", lib.display());
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("smoke.c");
    let exe = dir.path().join("smoke");
    std::fs::write(&src, C_PROGRAM).unwrap();
    let status = Command::new("cc")
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .expect("cc runs");
    assert!(status.success());
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "exit {:?}", out.status.code());
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "ok");
}
