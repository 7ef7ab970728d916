//! Colour-statistics backend so demos run on arbitrary photos. It looks for
//! saturated, non-green blobs on a coarse grid; it has no diagnostic value.

use super::backend::{BackendInfo, Capabilities, ClassificationResult, Detection, ImageInput, ModelBackend};
use crate::error::Result;
use crate::geometry::NormalizedBox;
use crate::raster::RasterImage;
use crate::taxonomy::{class_index, class_to_detection, NUM_CLASSES, NORMAL_SLUG};

const WORK_SIDE: u32 = 64;
const CELL: u32 = 8;
const MIN_SATURATION: f64 = 0.35;
const MIN_VALUE: f64 = 0.2;
const CELL_LESION_FRACTION: f64 = 0.3;

/// Hue ranges (degrees, half-open) assigned to a class slug. Greens between
/// 70 and 170 count as healthy tissue.
const HUE_BUCKETS: [(f64, f64, &str); 7] = [
    (0.0, 15.0, "brown_spot"),
    (15.0, 30.0, "blast"),
    (30.0, 45.0, "bacterial_leaf_blight"),
    (45.0, 60.0, "tungro"),
    (60.0, 70.0, "downy_mildew"),
    (170.0, 260.0, "hispa"),
    (260.0, 360.0, "leaf_roller"),
];

fn hsv(rgb: [u8; 3]) -> (f64, f64, f64) {
    let [r, g, b] = rgb.map(|c| f64::from(c) / 255.0);
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let d = max - min;
    let hue = if d == 0.0 {
        0.0
    } else if max == r {
        60.0 * ((g - b) / d).rem_euclid(6.0)
    } else if max == g {
        60.0 * ((b - r) / d + 2.0)
    } else {
        60.0 * ((r - g) / d + 4.0)
    };
    let sat = if max == 0.0 { 0.0 } else { d / max };
    (hue, sat, max)
}

/// Bucket index for a pixel, `None` when it is dull or green.
fn lesion_bucket(rgb: [u8; 3]) -> Option<usize> {
    let (h, s, v) = hsv(rgb);
    if s < MIN_SATURATION || v < MIN_VALUE {
        return None;
    }
    HUE_BUCKETS.iter().position(|&(lo, hi, _)| h >= lo && h < hi)
}

fn is_green(rgb: [u8; 3]) -> bool {
    let (h, s, v) = hsv(rgb);
    s >= MIN_SATURATION && v >= MIN_VALUE && (70.0..170.0).contains(&h)
}

pub struct HeuristicBackend {
    info: BackendInfo,
}

impl HeuristicBackend {
    pub fn new(backend_id: impl Into<String>) -> Self {
        Self {
            info: BackendInfo {
                backend_id: backend_id.into(),
                version: "heuristic-1".into(),
                capabilities: Capabilities { classify: true, detect: true },
                input_side: WORK_SIDE,
            },
        }
    }

    fn work_image(raster: &RasterImage) -> Result<RasterImage> {
        raster.resize_bilinear(WORK_SIDE, WORK_SIDE)
    }
}

impl Default for HeuristicBackend {
    fn default() -> Self {
        Self::new("heuristic")
    }
}

impl ModelBackend for HeuristicBackend {
    fn info(&self) -> &BackendInfo {
        &self.info
    }

    fn classify(&mut self, input: &ImageInput) -> Result<ClassificationResult> {
        let img = Self::work_image(&input.raster)?;
        let total = f64::from(WORK_SIDE * WORK_SIDE);
        let mut bucket_counts = [0.0f64; HUE_BUCKETS.len()];
        let mut green = 0.0;
        for y in 0..WORK_SIDE {
            for x in 0..WORK_SIDE {
                let p = img.pixel(x, y);
                if let Some(b) = lesion_bucket(p) {
                    bucket_counts[b] += 1.0;
                } else if is_green(p) {
                    green += 1.0;
                }
            }
        }
        let mut logits = vec![0.0; NUM_CLASSES];
        for (count, &(_, _, slug)) in bucket_counts.iter().zip(HUE_BUCKETS.iter()) {
            logits[class_index(slug)?] = 8.0 * count / total;
        }
        logits[class_index(NORMAL_SLUG)?] = 8.0 * green / total + 0.5;
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        ClassificationResult::new(exps.iter().map(|e| e / sum).collect())
    }

    fn detect_raw(&mut self, input: &ImageInput) -> Result<Vec<Detection>> {
        let img = Self::work_image(&input.raster)?;
        let cells = WORK_SIDE / CELL;
        let n = cells as usize;
        // per cell: lesion fraction and bucket histogram
        let mut frac = vec![0.0f64; n * n];
        let mut hist = vec![[0u32; HUE_BUCKETS.len()]; n * n];
        for cy in 0..cells {
            for cx in 0..cells {
                let i = cy as usize * n + cx as usize;
                for y in cy * CELL..(cy + 1) * CELL {
                    for x in cx * CELL..(cx + 1) * CELL {
                        if let Some(b) = lesion_bucket(img.pixel(x, y)) {
                            hist[i][b] += 1;
                        }
                    }
                }
                frac[i] = f64::from(hist[i].iter().sum::<u32>()) / f64::from(CELL * CELL);
            }
        }
        let active: Vec<bool> = frac.iter().map(|&f| f >= CELL_LESION_FRACTION).collect();
        let mut seen = vec![false; n * n];
        let mut out = Vec::new();
        for start in 0..n * n {
            if !active[start] || seen[start] {
                continue;
            }
            let mut stack = vec![start];
            seen[start] = true;
            let (mut x0, mut y0, mut x1, mut y1) = (n, n, 0, 0);
            let mut agg = [0u32; HUE_BUCKETS.len()];
            let mut frac_sum = 0.0;
            let mut size = 0.0;
            while let Some(i) = stack.pop() {
                let (x, y) = (i % n, i / n);
                x0 = x0.min(x);
                y0 = y0.min(y);
                x1 = x1.max(x + 1);
                y1 = y1.max(y + 1);
                for (a, h) in agg.iter_mut().zip(hist[i]) {
                    *a += h;
                }
                frac_sum += frac[i];
                size += 1.0;
                let neighbours = [
                    (x > 0).then(|| i - 1),
                    (x + 1 < n).then(|| i + 1),
                    (y > 0).then(|| i - n),
                    (y + 1 < n).then(|| i + n),
                ];
                for j in neighbours.into_iter().flatten() {
                    if active[j] && !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
            let bucket = (0..agg.len()).max_by_key(|&b| (agg[b], std::cmp::Reverse(b))).unwrap_or(0);
            let Some(det_class) = class_to_detection(class_index(HUE_BUCKETS[bucket].2)?) else {
                continue;
            };
            let nf = n as f64;
            let bbox = NormalizedBox::new(
                (x0 + x1) as f64 / (2.0 * nf),
                (y0 + y1) as f64 / (2.0 * nf),
                (x1 - x0) as f64 / nf,
                (y1 - y0) as f64 / nf,
            )?;
            let confidence = (0.2 + 0.7 * frac_sum / size).min(1.0);
            out.push(Detection::new(det_class, confidence, bbox)?);
        }
        Ok(out)
    }
}
