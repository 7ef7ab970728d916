use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::backend::{Detection, DetectionStatus, ImageInput, ModelBackend};
use crate::error::{Error, Result};
use crate::metrics::iou;

pub const DEFAULT_CONF_THRESHOLD: f64 = 0.25;
pub const DEFAULT_NMS_IOU: f64 = 0.45;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectParams {
    pub conf_threshold: f64,
    pub nms_iou: f64,
}

impl Default for DetectParams {
    fn default() -> Self {
        Self { conf_threshold: DEFAULT_CONF_THRESHOLD, nms_iou: DEFAULT_NMS_IOU }
    }
}

impl DetectParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("conf_threshold", self.conf_threshold), ("nms_iou", self.nms_iou)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::invalid(format!("{name} {v} must lie in (0, 1)")));
            }
        }
        Ok(())
    }
}

fn by_confidence_desc(a: &Detection, b: &Detection) -> Ordering {
    b.confidence.partial_cmp(&a.confidence).unwrap_or(Ordering::Equal)
}

/// Greedy class-wise suppression. Output is sorted by descending confidence
/// and every survivor is marked `Kept`.
pub fn nms(dets: &[Detection], iou_threshold: f64) -> Vec<Detection> {
    let mut order: Vec<Detection> = dets.to_vec();
    order.sort_by(by_confidence_desc);
    let mut kept: Vec<Detection> = Vec::with_capacity(order.len());
    for d in order {
        let suppressed = kept.iter().any(|k| {
            k.class_index == d.class_index
                && iou(&k.bbox.to_rect(), &d.bbox.to_rect()).unwrap_or(0.0) >= iou_threshold
        });
        if !suppressed {
            kept.push(Detection { status: DetectionStatus::Kept, ..d });
        }
    }
    kept
}

pub fn detect(backend: &mut dyn ModelBackend, input: &ImageInput, params: DetectParams) -> Result<Vec<Detection>> {
    params.validate()?;
    if !backend.info().capabilities.detect {
        return Err(Error::Unsupported(format!("backend {} cannot detect", backend.info().backend_id)));
    }
    let raw: Vec<Detection> = backend
        .detect_raw(input)?
        .into_iter()
        .filter(|d| d.confidence >= params.conf_threshold)
        .collect();
    Ok(nms(&raw, params.nms_iou))
}
