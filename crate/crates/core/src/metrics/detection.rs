use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::report::{EvalReport, ReportColumn};
use super::ratio;
use crate::error::{Error, Result};
use crate::geometry::Rect;
use crate::taxonomy::{self, NUM_DETECTION_CLASSES};

pub const MAP_IOU_THRESHOLD: f64 = 0.5;

/// Intersection over union of two boxes in a common frame.
pub fn iou(a: &Rect, b: &Rect) -> Result<f64> {
    if a.is_degenerate() || b.is_degenerate() {
        return Err(Error::invalid("iou of a zero-area box"));
    }
    let inter = a.intersection(b).area();
    let union = a.area() + b.area() - inter;
    Ok((inter / union).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredBox {
    pub class_index: usize,
    pub confidence: f64,
    pub rect: Rect,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub class_index: usize,
    pub rect: Rect,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchOutcome {
    /// Aligned with the input prediction order.
    pub is_tp: Vec<bool>,
    /// Ground-truth index each prediction matched, if any.
    pub matched_gt: Vec<Option<usize>>,
    pub unmatched_gt: usize,
}

impl MatchOutcome {
    pub fn tp_count(&self) -> usize {
        self.is_tp.iter().filter(|&&t| t).count()
    }

    pub fn fp_count(&self) -> usize {
        self.is_tp.len() - self.tp_count()
    }
}

/// Indices of `preds` by descending confidence; ties keep input order.
fn confidence_order(confidences: impl Iterator<Item = f64>) -> Vec<usize> {
    let conf: Vec<f64> = confidences.collect();
    let mut order: Vec<usize> = (0..conf.len()).collect();
    order.sort_by(|&a, &b| conf[b].partial_cmp(&conf[a]).unwrap_or(Ordering::Equal));
    order
}

/// Greedy matching in descending confidence. A prediction is a true positive
/// when the best-IoU not-yet-matched ground truth of its class reaches the
/// threshold.
pub fn match_detections(preds: &[ScoredBox], gts: &[GroundTruth], iou_threshold: f64) -> MatchOutcome {
    let mut is_tp = vec![false; preds.len()];
    let mut matched_gt = vec![None; preds.len()];
    let mut taken = vec![false; gts.len()];
    for p in confidence_order(preds.iter().map(|p| p.confidence)) {
        let pred = &preds[p];
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in gts.iter().enumerate() {
            if taken[g] || gt.class_index != pred.class_index {
                continue;
            }
            let overlap = iou(&pred.rect, &gt.rect).unwrap_or(0.0);
            if best.is_none_or(|(_, b)| overlap > b) {
                best = Some((g, overlap));
            }
        }
        if let Some((g, overlap)) = best {
            if overlap >= iou_threshold {
                taken[g] = true;
                is_tp[p] = true;
                matched_gt[p] = Some(g);
            }
        }
    }
    MatchOutcome {
        is_tp,
        matched_gt,
        unmatched_gt: taken.iter().filter(|&&t| !t).count(),
    }
}

/// Area under the precision-recall curve swept over the confidence-ranked
/// list, with precision replaced by its running maximum from the right.
/// Returns `None` when there is no ground truth for the class.
pub fn average_precision(ranked: &[(f64, bool)], gt_count: usize) -> Option<f64> {
    if gt_count == 0 {
        return None;
    }
    let order = confidence_order(ranked.iter().map(|r| r.0));
    let mut precision = Vec::with_capacity(order.len());
    let mut is_tp = Vec::with_capacity(order.len());
    let mut tp = 0usize;
    for (k, &i) in order.iter().enumerate() {
        if ranked[i].1 {
            tp += 1;
        }
        precision.push(tp as f64 / (k + 1) as f64);
        is_tp.push(ranked[i].1);
    }
    for k in (0..precision.len().saturating_sub(1)).rev() {
        precision[k] = precision[k].max(precision[k + 1]);
    }
    let step = 1.0 / gt_count as f64;
    let ap = precision
        .iter()
        .zip(&is_tp)
        .filter(|(_, &t)| t)
        .map(|(p, _)| p * step)
        .sum::<f64>();
    Some(ap.min(1.0))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ImageDetections {
    pub predictions: Vec<ScoredBox>,
    pub ground_truth: Vec<GroundTruth>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassAP {
    pub class_index: usize,
    pub ap: f64,
    pub box_precision: f64,
    pub box_recall: f64,
    pub gt_count: usize,
    pub pred_count: usize,
    pub tp_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionEvaluation {
    pub num_classes: usize,
    pub iou_threshold: f64,
    /// Classes with at least one ground-truth box, in class order.
    pub per_class: Vec<ClassAP>,
    pub map: f64,
    pub mean_box_precision: f64,
    pub mean_box_recall: f64,
}

/// Matches every image at `iou_threshold` and accumulates per-class AP and
/// operating-point precision/recall over all retained predictions.
pub fn evaluate_detections(
    images: &[ImageDetections],
    num_classes: usize,
    iou_threshold: f64,
) -> Result<DetectionEvaluation> {
    let mut ranked: Vec<Vec<(f64, bool)>> = vec![Vec::new(); num_classes];
    let mut gt_counts = vec![0usize; num_classes];
    for (i, image) in images.iter().enumerate() {
        for p in &image.predictions {
            if p.class_index >= num_classes {
                return Err(Error::invalid(format!("image {i}: prediction class {} out of range", p.class_index)));
            }
            if !(0.0..=1.0).contains(&p.confidence) {
                return Err(Error::invalid(format!("image {i}: confidence {} outside [0, 1]", p.confidence)));
            }
        }
        for g in &image.ground_truth {
            if g.class_index >= num_classes {
                return Err(Error::invalid(format!("image {i}: ground-truth class {} out of range", g.class_index)));
            }
            gt_counts[g.class_index] += 1;
        }
        let outcome = match_detections(&image.predictions, &image.ground_truth, iou_threshold);
        for (p, tp) in image.predictions.iter().zip(outcome.is_tp) {
            ranked[p.class_index].push((p.confidence, tp));
        }
    }
    if gt_counts.iter().all(|&g| g == 0) {
        return Err(Error::invalid("no ground-truth boxes to evaluate against"));
    }
    let per_class: Vec<ClassAP> = (0..num_classes)
        .filter_map(|c| {
            let ap = average_precision(&ranked[c], gt_counts[c])?;
            let tp = ranked[c].iter().filter(|r| r.1).count();
            Some(ClassAP {
                class_index: c,
                ap,
                box_precision: ratio(tp as f64, ranked[c].len() as f64),
                box_recall: ratio(tp as f64, gt_counts[c] as f64),
                gt_count: gt_counts[c],
                pred_count: ranked[c].len(),
                tp_count: tp,
            })
        })
        .collect();
    let n = per_class.len() as f64;
    let mean = |f: fn(&ClassAP) -> f64| per_class.iter().map(f).sum::<f64>() / n;
    Ok(DetectionEvaluation {
        num_classes,
        iou_threshold,
        map: mean(|c| c.ap),
        mean_box_precision: mean(|c| c.box_precision),
        mean_box_recall: mean(|c| c.box_recall),
        per_class,
    })
}

impl DetectionEvaluation {
    pub fn report(&self) -> EvalReport {
        let rows = self
            .per_class
            .iter()
            .map(|c| {
                let label = if self.num_classes == NUM_DETECTION_CLASSES {
                    taxonomy::detection_slug(c.class_index).expect("in range").to_string()
                } else {
                    format!("class_{}", c.class_index)
                };
                (label, vec![c.box_precision, c.box_recall, c.ap])
            })
            .collect();
        let mut report = EvalReport::from_fractions(
            "Detection results",
            vec![
                ReportColumn::new("box_precision", "Box Precision"),
                ReportColumn::new("box_recall", "Box Recall"),
                ReportColumn::new("map50", "map50"),
            ],
            rows,
        );
        report.notes.push(
            "box precision/recall are computed over all retained predictions (no confidence cutoff)"
                .to_string(),
        );
        report
    }
}

/// mAP50 report over the 12 detection classes.
pub fn detection_report(images: &[ImageDetections]) -> Result<EvalReport> {
    Ok(evaluate_detections(images, NUM_DETECTION_CLASSES, MAP_IOU_THRESHOLD)?.report())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rect(x1: f64, y1: f64, x2: f64, y2: f64) -> Rect {
        Rect::new(x1, y1, x2, y2)
    }

    /// Counts unit cells covered by each axis-aligned integer box.
    fn raster_iou(a: (i32, i32, i32, i32), b: (i32, i32, i32, i32)) -> f64 {
        let inside = |r: (i32, i32, i32, i32), x: i32, y: i32| x >= r.0 && x < r.2 && y >= r.1 && y < r.3;
        let (mut inter, mut union) = (0, 0);
        for y in -20..40 {
            for x in -20..40 {
                let (ia, ib) = (inside(a, x, y), inside(b, x, y));
                inter += (ia && ib) as i32;
                union += (ia || ib) as i32;
            }
        }
        f64::from(inter) / f64::from(union)
    }

    #[test]
    fn iou_examples() {
        let a = rect(0.0, 0.0, 10.0, 10.0);
        let b = rect(5.0, 0.0, 15.0, 10.0);
        let oracle = raster_iou((0, 0, 10, 10), (5, 0, 15, 10));
        assert!((oracle - 1.0 / 3.0).abs() < 1e-12);
        assert!((iou(&a, &b).unwrap() - oracle).abs() < 1e-3);
        assert_eq!(iou(&a, &a).unwrap(), 1.0);
        assert_eq!(iou(&a, &rect(20.0, 20.0, 30.0, 30.0)).unwrap(), 0.0);
        assert!(iou(&a, &rect(1.0, 1.0, 1.0, 5.0)).is_err());
    }

    #[test]
    fn matching_examples() {
        let gt = [GroundTruth { class_index: 0, rect: rect(0.0, 0.0, 10.0, 10.0) }];
        let exact = [ScoredBox { class_index: 0, confidence: 0.9, rect: gt[0].rect }];
        let m = match_detections(&exact, &gt, 0.5);
        assert_eq!((m.tp_count(), m.fp_count(), m.unmatched_gt), (1, 0, 0));

        let two = [
            ScoredBox { class_index: 0, confidence: 0.8, rect: rect(0.0, 0.0, 10.0, 9.0) },
            ScoredBox { class_index: 0, confidence: 0.9, rect: rect(0.0, 1.0, 10.0, 10.0) },
        ];
        let m = match_detections(&two, &gt, 0.5);
        assert_eq!(m.is_tp, vec![false, true]);

        let wrong_class = [ScoredBox { class_index: 1, confidence: 0.9, rect: gt[0].rect }];
        let m = match_detections(&wrong_class, &gt, 0.5);
        assert_eq!((m.tp_count(), m.unmatched_gt), (0, 1));
    }

    #[test]
    fn ap_examples() {
        assert_eq!(average_precision(&[(0.9, true)], 1), Some(1.0));
        assert_eq!(average_precision(&[(0.9, false), (0.8, true)], 1), Some(0.5));
        assert_eq!(average_precision(&[], 3), Some(0.0));
        assert_eq!(average_precision(&[(0.9, true)], 0), None);
    }

    #[test]
    fn ap_is_rank_only() {
        let ranked: [(f64, bool); 5] = [(0.9, true), (0.7, false), (0.6, true), (0.2, false), (0.1, true)];
        let rescaled: Vec<(f64, bool)> = ranked.iter().map(|&(c, t)| (c.powi(3) * 0.5, t)).collect();
        assert_eq!(average_precision(&ranked, 4), average_precision(&rescaled, 4));
    }

    #[test]
    fn perfect_single_class() {
        let r = rect(0.1, 0.1, 0.4, 0.5);
        let img = ImageDetections {
            predictions: vec![ScoredBox { class_index: 4, confidence: 0.8, rect: r }],
            ground_truth: vec![GroundTruth { class_index: 4, rect: r }],
        };
        let report = detection_report(&[img]).unwrap();
        assert_eq!(report.rows.len(), 1);
        assert_eq!(report.rows[0].label, "blast");
        assert_eq!(report.all.values, vec![100.0, 100.0, 100.0]);
    }

    #[test]
    fn no_ground_truth_is_invalid() {
        let img = ImageDetections {
            predictions: vec![ScoredBox { class_index: 0, confidence: 0.5, rect: rect(0.0, 0.0, 1.0, 1.0) }],
            ground_truth: vec![],
        };
        assert!(matches!(detection_report(&[img]), Err(Error::InvalidInput(_))));
    }
}
