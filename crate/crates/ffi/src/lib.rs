//! C ABI over the evaluation and post-processing parts of `paddy-core`.
//!
//! Every function returns a [`PaddyStatus`]; on failure the message is kept
//! per thread and can be fetched with [`paddy_last_error_message`]. Results
//! are written through out-pointers. Strings returned by the library are
//! static and must not be freed. The detection evaluator is an opaque handle
//! created with [`paddy_evaluator_new`] and released with
//! [`paddy_evaluator_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::OnceLock;

use paddy_core::geometry::{NormalizedBox, Rect};
use paddy_core::inference::{nms, Detection};
use paddy_core::metrics::{
    classification_metrics, cross_entropy, evaluate_detections, iou, ConfusionMatrix, GroundTruth,
    ImageDetections, ProbMatrix, ScoredBox,
};
use paddy_core::taxonomy::{self, NUM_CLASSES, NUM_DETECTION_CLASSES};
use paddy_core::Error;

/// Result code of every exported function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PaddyStatus {
    Ok = 0,
    InvalidInput = 1,
    NotFound = 2,
    Unsupported = 3,
    FixtureMiss = 4,
    LeaseInvalid = 5,
    Unavailable = 6,
    Conflict = 7,
    Unauthorized = 8,
    Forbidden = 9,
    UnsupportedMedia = 10,
    PayloadTooLarge = 11,
    Refused = 12,
    Parse = 13,
    Io = 14,
    NullPointer = 15,
    BufferTooSmall = 16,
    Panic = 17,
}

impl From<&Error> for PaddyStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::InvalidInput(_) => Self::InvalidInput,
            Error::NotFound(_) => Self::NotFound,
            Error::Unsupported(_) => Self::Unsupported,
            Error::FixtureMiss(_) => Self::FixtureMiss,
            Error::LeaseInvalid => Self::LeaseInvalid,
            Error::Unavailable(_) => Self::Unavailable,
            Error::Conflict(_) => Self::Conflict,
            Error::Unauthorized => Self::Unauthorized,
            Error::Forbidden => Self::Forbidden,
            Error::UnsupportedMedia(_) => Self::UnsupportedMedia,
            Error::PayloadTooLarge { .. } => Self::PayloadTooLarge,
            Error::Refused(_) => Self::Refused,
            Error::Parse { .. } | Error::Json(_) => Self::Parse,
            Error::Io(_) => Self::Io,
        }
    }
}

/// Axis-aligned box as corner coordinates.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PaddyRect {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

/// Detection in normalized center format.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PaddyDetection {
    pub class_index: usize,
    pub confidence: f64,
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PaddyScoredBox {
    pub class_index: usize,
    pub confidence: f64,
    pub rect: PaddyRect,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PaddyGroundTruth {
    pub class_index: usize,
    pub rect: PaddyRect,
}

/// Fractions in `[0, 1]`.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PaddyClassificationSummary {
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
}

/// Fractions in `[0, 1]`; means run over classes with ground truth.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PaddyDetectionSummary {
    pub map: f64,
    pub mean_box_precision: f64,
    pub mean_box_recall: f64,
    pub classes_evaluated: usize,
}

/// Accumulates images for detection evaluation.
pub struct PaddyDetectionEvaluator {
    num_classes: usize,
    iou_threshold: f64,
    images: Vec<ImageDetections>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

struct Failure(PaddyStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(PaddyStatus::from(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(PaddyStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> PaddyStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
            PaddyStatus::Ok
        }
        Ok(Err(Failure(status, message))) => {
            set_last_error(message);
            status
        }
        Err(_) => {
            set_last_error("internal panic".into());
            PaddyStatus::Panic
        }
    }
}

/// Borrows `len` items; a null pointer is accepted only when `len` is 0.
unsafe fn slice<'a, T>(ptr: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

unsafe fn write<T>(out: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

fn rect(r: &PaddyRect) -> Rect {
    Rect::new(r.x1, r.y1, r.x2, r.y2)
}

/// Copies the calling thread's last error message into `buf` as a
/// NUL-terminated string and returns the buffer size needed, including the
/// terminator. Returns 0 when there is no error. A null `buf` or a short
/// `cap` only reports the size.
///
/// # Safety
/// `buf` must be null or valid for `cap` bytes.
#[no_mangle]
pub unsafe extern "C" fn paddy_last_error_message(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|slot| {
        let slot = slot.borrow();
        let Some(msg) = slot.as_ref() else { return 0 };
        let bytes = msg.as_bytes_with_nul();
        if !buf.is_null() && cap >= bytes.len() {
            std::ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, bytes.len());
        }
        bytes.len()
    })
}

#[no_mangle]
pub extern "C" fn paddy_num_classes() -> usize {
    NUM_CLASSES
}

#[no_mangle]
pub extern "C" fn paddy_num_detection_classes() -> usize {
    NUM_DETECTION_CLASSES
}

fn slug_table() -> &'static [CString] {
    static SLUGS: OnceLock<Vec<CString>> = OnceLock::new();
    SLUGS.get_or_init(|| taxonomy::CLASSES.iter().map(|c| CString::new(c.slug).expect("slugs are ASCII")).collect())
}

/// Static slug of a classification class, or null when out of range.
#[no_mangle]
pub extern "C" fn paddy_class_slug(index: usize) -> *const c_char {
    slug_table().get(index).map_or(std::ptr::null(), |s| s.as_ptr())
}

/// # Safety
/// `slug` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn paddy_class_index(slug: *const c_char, out: *mut usize) -> PaddyStatus {
    guard(|| {
        if slug.is_null() {
            return Err(null("slug"));
        }
        let s = CStr::from_ptr(slug).to_str().map_err(|e| Failure(PaddyStatus::InvalidInput, e.to_string()))?;
        write(out, taxonomy::class_index(s)?, "out")
    })
}

/// Maps a detection class index onto the classification index space.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn paddy_detection_to_class(detection_index: usize, out: *mut usize) -> PaddyStatus {
    guard(|| write(out, taxonomy::detection_to_class(detection_index)?, "out"))
}

/// # Safety
/// `a`, `b` must point to valid rects; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn paddy_iou(a: *const PaddyRect, b: *const PaddyRect, out: *mut f64) -> PaddyStatus {
    guard(|| {
        let (Some(a), Some(b)) = (a.as_ref(), b.as_ref()) else { return Err(null("rect")) };
        write(out, iou(&rect(a), &rect(b))?, "out")
    })
}

/// Mean cross-entropy of a row-major `rows x cols` probability matrix.
///
/// # Safety
/// `probs` must hold `rows * cols` values, `labels` must hold `rows`.
#[no_mangle]
pub unsafe extern "C" fn paddy_cross_entropy(
    probs: *const f64,
    rows: usize,
    cols: usize,
    labels: *const usize,
    out: *mut f64,
) -> PaddyStatus {
    guard(|| {
        let n = rows.checked_mul(cols).ok_or_else(|| Failure(PaddyStatus::InvalidInput, "matrix too large".into()))?;
        let data = slice(probs, n, "probs")?.to_vec();
        let labels = slice(labels, rows, "labels")?;
        let m = ProbMatrix::new(rows, cols, data)?;
        write(out, cross_entropy(&m, labels)?, "out")
    })
}

/// Summary metrics of a row-major `classes x classes` confusion matrix with
/// rows as truth.
///
/// # Safety
/// `matrix` must hold `classes * classes` counts; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn paddy_classification_summary(
    matrix: *const u64,
    classes: usize,
    out: *mut PaddyClassificationSummary,
) -> PaddyStatus {
    guard(|| {
        let n = classes.checked_mul(classes).ok_or_else(|| Failure(PaddyStatus::InvalidInput, "matrix too large".into()))?;
        let flat = slice(matrix, n, "matrix")?;
        let rows: Vec<Vec<u64>> = flat.chunks(classes.max(1)).map(<[u64]>::to_vec).collect();
        let m = classification_metrics(&ConfusionMatrix::from_rows(&rows)?)?;
        let summary = PaddyClassificationSummary {
            accuracy: m.accuracy,
            macro_precision: m.macro_precision,
            macro_recall: m.macro_recall,
            macro_f1: m.macro_f1,
        };
        write(out, summary, "out")
    })
}

/// Greedy class-wise non-maximum suppression. Survivors are written to
/// `out` in descending confidence order and their number to `out_len`. When
/// `out_cap` is too small, `out_len` still receives the needed count and
/// `BufferTooSmall` is returned.
///
/// # Safety
/// `dets` must hold `len` items, `out` must be valid for `out_cap` items and
/// `out_len` must be writable.
#[no_mangle]
pub unsafe extern "C" fn paddy_nms(
    dets: *const PaddyDetection,
    len: usize,
    iou_threshold: f64,
    out: *mut PaddyDetection,
    out_cap: usize,
    out_len: *mut usize,
) -> PaddyStatus {
    guard(|| {
        if !(0.0..=1.0).contains(&iou_threshold) {
            return Err(Error::InvalidInput(format!("iou threshold {iou_threshold} outside [0, 1]")).into());
        }
        let input = slice(dets, len, "dets")?
            .iter()
            .map(|d| Detection::new(d.class_index, d.confidence, NormalizedBox { cx: d.cx, cy: d.cy, w: d.w, h: d.h }))
            .collect::<paddy_core::Result<Vec<_>>>()?;
        let kept = nms(&input, iou_threshold);
        write(out_len, kept.len(), "out_len")?;
        if kept.len() > out_cap {
            return Err(Failure(PaddyStatus::BufferTooSmall, format!("{} survivors, capacity {out_cap}", kept.len())));
        }
        if out.is_null() && !kept.is_empty() {
            return Err(null("out"));
        }
        for (i, d) in kept.iter().enumerate() {
            let b = d.bbox;
            out.add(i).write(PaddyDetection { class_index: d.class_index, confidence: d.confidence, cx: b.cx, cy: b.cy, w: b.w, h: b.h });
        }
        Ok(())
    })
}

/// # Safety
/// `out` must be writable. The handle must be released with
/// [`paddy_evaluator_free`].
#[no_mangle]
pub unsafe extern "C" fn paddy_evaluator_new(
    num_classes: usize,
    iou_threshold: f64,
    out: *mut *mut PaddyDetectionEvaluator,
) -> PaddyStatus {
    guard(|| {
        if num_classes == 0 || !(iou_threshold > 0.0 && iou_threshold <= 1.0) {
            return Err(Error::InvalidInput("need at least one class and an iou threshold in (0, 1]".into()).into());
        }
        let ev = Box::new(PaddyDetectionEvaluator { num_classes, iou_threshold, images: Vec::new() });
        write(out, Box::into_raw(ev), "out")
    })
}

/// Adds one image's predictions and ground truth.
///
/// # Safety
/// `ev` must come from [`paddy_evaluator_new`]; the arrays must hold the
/// stated number of items.
#[no_mangle]
pub unsafe extern "C" fn paddy_evaluator_add_image(
    ev: *mut PaddyDetectionEvaluator,
    preds: *const PaddyScoredBox,
    n_preds: usize,
    gts: *const PaddyGroundTruth,
    n_gts: usize,
) -> PaddyStatus {
    guard(|| {
        let ev = ev.as_mut().ok_or_else(|| null("evaluator"))?;
        let predictions = slice(preds, n_preds, "preds")?
            .iter()
            .map(|p| ScoredBox { class_index: p.class_index, confidence: p.confidence, rect: rect(&p.rect) })
            .collect();
        let ground_truth = slice(gts, n_gts, "gts")?
            .iter()
            .map(|g| GroundTruth { class_index: g.class_index, rect: rect(&g.rect) })
            .collect();
        ev.images.push(ImageDetections { predictions, ground_truth });
        Ok(())
    })
}

/// # Safety
/// `ev` must come from [`paddy_evaluator_new`]; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn paddy_evaluator_compute(
    ev: *const PaddyDetectionEvaluator,
    out: *mut PaddyDetectionSummary,
) -> PaddyStatus {
    guard(|| {
        let ev = ev.as_ref().ok_or_else(|| null("evaluator"))?;
        let r = evaluate_detections(&ev.images, ev.num_classes, ev.iou_threshold)?;
        let summary = PaddyDetectionSummary {
            map: r.map,
            mean_box_precision: r.mean_box_precision,
            mean_box_recall: r.mean_box_recall,
            classes_evaluated: r.per_class.len(),
        };
        write(out, summary, "out")
    })
}

/// AP of one class. Classes without ground truth give `NotFound`.
///
/// # Safety
/// `ev` must come from [`paddy_evaluator_new`]; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn paddy_evaluator_class_ap(
    ev: *const PaddyDetectionEvaluator,
    class_index: usize,
    out: *mut f64,
) -> PaddyStatus {
    guard(|| {
        let ev = ev.as_ref().ok_or_else(|| null("evaluator"))?;
        let r = evaluate_detections(&ev.images, ev.num_classes, ev.iou_threshold)?;
        let ap = r
            .per_class
            .iter()
            .find(|c| c.class_index == class_index)
            .ok_or_else(|| Error::NotFound(format!("class {class_index} has no ground truth")))?
            .ap;
        write(out, ap, "out")
    })
}

/// # Safety
/// `ev` must be null or come from [`paddy_evaluator_new`] and not be used
/// afterwards.
#[no_mangle]
pub unsafe extern "C" fn paddy_evaluator_free(ev: *mut PaddyDetectionEvaluator) {
    if !ev.is_null() {
        drop(Box::from_raw(ev));
    }
}
