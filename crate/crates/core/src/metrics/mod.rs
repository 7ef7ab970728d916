//! Evaluation metrics: categorical cross-entropy, confusion matrices and the
//! derived accuracy/precision/recall/F1, box matching, average precision and
//! mAP at IoU 0.5, plus the tabular report both tasks render into.

mod classification;
mod detection;
mod report;

pub use classification::{
    classification_metrics, classification_report, confusion, cross_entropy, BinaryCounts,
    ClassScores, ClassificationMetrics, ConfusionMatrix, ProbMatrix, PROB_CLAMP,
};
pub(crate) use classification::{argmax, validate_distribution};
pub use detection::{
    average_precision, detection_report, evaluate_detections, iou, match_detections, ClassAP,
    DetectionEvaluation, GroundTruth, ImageDetections, MatchOutcome, ScoredBox, MAP_IOU_THRESHOLD,
};
pub use report::{round_percent, EvalReport, ReportColumn, ReportRow, ALL_LABEL};

/// Ratio with the zero-denominator convention used by every metric here.
pub(crate) fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}
