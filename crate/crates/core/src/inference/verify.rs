//! Second-stage check: classify each detector crop and mark agreement.

use serde::{Deserialize, Serialize};

use super::backend::{digest_hex, Detection, DetectionStatus, ImageInput, ModelBackend};
use crate::error::{Error, Result};
use crate::geometry::Rect;
use crate::taxonomy::detection_to_class;

pub const DEFAULT_CROP_MARGIN: f64 = 0.10;
pub const DEFAULT_AGREE_PROB: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerifyParams {
    /// Fraction of the box width/height added on each side before cropping.
    pub crop_margin: f64,
    pub agree_prob: f64,
}

impl Default for VerifyParams {
    fn default() -> Self {
        Self { crop_margin: DEFAULT_CROP_MARGIN, agree_prob: DEFAULT_AGREE_PROB }
    }
}

impl VerifyParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.crop_margin >= 0.0 && self.crop_margin.is_finite()) {
            return Err(Error::invalid(format!("crop_margin {} must be >= 0", self.crop_margin)));
        }
        if !(0.0..=1.0).contains(&self.agree_prob) {
            return Err(Error::invalid(format!("agree_prob {} outside [0, 1]", self.agree_prob)));
        }
        Ok(())
    }
}

/// The exact classifier input produced for one detection: the box grown by
/// `margin`, clipped to the frame, resized to `side`x`side`. The crop's digest
/// is the SHA-256 of its PNG encoding and its parent is the source image.
pub fn crop_for_verification(image: &ImageInput, det: &Detection, margin: f64, side: u32) -> Result<ImageInput> {
    let w = f64::from(image.raster.width());
    let h = f64::from(image.raster.height());
    let r = det.bbox.to_pixels(image.raster.width(), image.raster.height());
    let (mx, my) = (r.width() * margin, r.height() * margin);
    let grown = Rect::new((r.x1 - mx).max(0.0), (r.y1 - my).max(0.0), (r.x2 + mx).min(w), (r.y2 + my).min(h));
    let raster = image.raster.crop(&grown)?.resize_bilinear(side, side)?;
    Ok(ImageInput {
        digest: digest_hex(&raster.encode_png()?),
        raster,
        parent_digest: Some(image.digest.clone()),
    })
}

/// Sets each detection's status to `Verified` or `Contested`. Nothing is
/// added, removed or reordered.
pub fn verify_detections(
    image: &ImageInput,
    dets: &[Detection],
    classifier: &mut dyn ModelBackend,
    params: VerifyParams,
) -> Result<Vec<Detection>> {
    params.validate()?;
    let side = classifier.info().input_side;
    dets.iter()
        .map(|d| {
            let crop = crop_for_verification(image, d, params.crop_margin, side)?;
            let verdict = classifier.classify(&crop)?;
            let mapped = detection_to_class(d.class_index)?;
            let agrees = verdict.top_class == mapped || verdict.probs[mapped] >= params.agree_prob;
            let status = if agrees { DetectionStatus::Verified } else { DetectionStatus::Contested };
            Ok(Detection { status, ..*d })
        })
        .collect()
}
