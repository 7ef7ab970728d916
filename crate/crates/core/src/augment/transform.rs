use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::annotation::AnnotatedBox;
use crate::error::{Error, Result};
use crate::geometry::{NormalizedBox, Rect};
use crate::raster::{to_u8, RasterImage};

pub const DEFAULT_MIN_VISIBILITY: f64 = 0.30;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TransformSpec {
    /// Counter-clockwise as displayed, in degrees.
    pub rotation: f64,
    pub hflip: bool,
    pub vflip: bool,
    /// Added to every channel as a fraction of 255.
    pub brightness_delta: f64,
    /// Horizontal shear angle in degrees.
    pub shear_x: f64,
}

impl TransformSpec {
    pub fn identity() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<()> {
        if !(-180.0..=180.0).contains(&self.rotation) {
            return Err(Error::invalid(format!("rotation {} outside [-180, 180]", self.rotation)));
        }
        if self.brightness_delta.abs() > 1.0 {
            return Err(Error::invalid("brightness delta magnitude exceeds 1"));
        }
        if self.shear_x.abs() >= 90.0 || self.shear_x.is_nan() {
            return Err(Error::invalid("shear must be strictly between -90 and 90 degrees"));
        }
        Ok(())
    }

    pub fn is_geometric_identity(&self) -> bool {
        self.rotation == 0.0 && self.shear_x == 0.0 && !self.hflip && !self.vflip
    }

    pub fn is_identity(&self) -> bool {
        self.is_geometric_identity() && self.brightness_delta == 0.0
    }
}

/// Affine map of continuous pixel coordinates (the image spans
/// `[0, width] x [0, height]`), built about the image center as
/// shear * rotation * flip.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineMap {
    m: [[f64; 2]; 2],
    center: (f64, f64),
}

impl AffineMap {
    pub fn new(spec: &TransformSpec, width: u32, height: u32) -> Self {
        let fx = if spec.hflip { -1.0 } else { 1.0 };
        let fy = if spec.vflip { -1.0 } else { 1.0 };
        let (s, c) = spec.rotation.to_radians().sin_cos();
        let k = spec.shear_x.to_radians().tan();
        // rotation in y-down coordinates
        let rot = [[c, s], [-s, c]];
        let shear = [[1.0, k], [0.0, 1.0]];
        let rs = mul(shear, rot);
        let m = [[rs[0][0] * fx, rs[0][1] * fy], [rs[1][0] * fx, rs[1][1] * fy]];
        Self { m, center: (f64::from(width) / 2.0, f64::from(height) / 2.0) }
    }

    pub fn forward(&self, (x, y): (f64, f64)) -> (f64, f64) {
        let (qx, qy) = (x - self.center.0, y - self.center.1);
        (
            self.m[0][0] * qx + self.m[0][1] * qy + self.center.0,
            self.m[1][0] * qx + self.m[1][1] * qy + self.center.1,
        )
    }

    pub fn inverse(&self, (x, y): (f64, f64)) -> (f64, f64) {
        let [[a, b], [c, d]] = self.m;
        let det = a * d - b * c;
        let (qx, qy) = (x - self.center.0, y - self.center.1);
        (
            (d * qx - b * qy) / det + self.center.0,
            (-c * qx + a * qy) / det + self.center.1,
        )
    }
}

fn mul(a: [[f64; 2]; 2], b: [[f64; 2]; 2]) -> [[f64; 2]; 2] {
    [
        [a[0][0] * b[0][0] + a[0][1] * b[1][0], a[0][0] * b[0][1] + a[0][1] * b[1][1]],
        [a[1][0] * b[0][0] + a[1][1] * b[1][0], a[1][0] * b[0][1] + a[1][1] * b[1][1]],
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedImage {
    pub image: RasterImage,
    pub boxes: Vec<AnnotatedBox>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxOutcome {
    /// Axis-aligned hull of the mapped corners, before clipping (pixels).
    pub hull: Rect,
    /// Hull clipped to the frame (pixels).
    pub clipped: Rect,
    /// `clipped.area() / hull.area()`.
    pub visibility: f64,
    /// The surviving box, snapped to the annotation grid.
    pub kept: Option<NormalizedBox>,
}

/// Maps one box through `map`. The box survives iff the in-frame share of
/// its transformed hull is at least `min_visibility`.
pub fn transform_box(
    b: &NormalizedBox,
    map: &AffineMap,
    width: u32,
    height: u32,
    min_visibility: f64,
) -> BoxOutcome {
    let (w, h) = (f64::from(width), f64::from(height));
    let corners = b.to_pixels(width, height).corners().map(|p| map.forward(p));
    let hull = Rect::hull(&corners);
    let clipped = hull.intersection(&Rect::new(0.0, 0.0, w, h));
    let hull_area = hull.area();
    let visibility = if hull_area > 0.0 { clipped.area() / hull_area } else { 0.0 };
    let kept = if visibility >= min_visibility && !clipped.is_degenerate() {
        NormalizedBox::from_rect_on_grid(&clipped.scale(1.0 / w, 1.0 / h))
    } else {
        None
    };
    BoxOutcome { hull, clipped, visibility, kept }
}

/// Applies `spec` to pixels (bilinear sampling, black fill, brightness with
/// clamping) and to boxes (corner mapping, hull, clip, visibility filter).
pub fn apply_transform(ann: &AnnotatedImage, spec: &TransformSpec, min_visibility: f64) -> Result<AnnotatedImage> {
    spec.validate()?;
    if !(min_visibility > 0.0 && min_visibility <= 1.0) {
        return Err(Error::invalid("min_visibility must lie in (0, 1]"));
    }
    if spec.is_identity() {
        return Ok(ann.clone());
    }
    let (width, height) = (ann.image.width(), ann.image.height());
    let map = AffineMap::new(spec, width, height);
    let offset = spec.brightness_delta * 255.0;
    let image = if spec.is_geometric_identity() {
        let mut img = ann.image.clone();
        for p in img.pixels_mut() {
            *p = (f64::from(*p) + offset).round().clamp(0.0, 255.0) as u8;
        }
        img
    } else {
        RasterImage::from_fn(width, height, |x, y| {
            let (sx, sy) = map.inverse((f64::from(x) + 0.5, f64::from(y) + 0.5));
            let v = ann.image.sample_black_fill(sx - 0.5, sy - 0.5);
            to_u8(v.map(|c| c + offset))
        })?
    };
    let boxes = if spec.is_geometric_identity() {
        ann.boxes.clone()
    } else {
        ann.boxes
            .iter()
            .filter_map(|b| {
                transform_box(&b.bbox, &map, width, height, min_visibility)
                    .kept
                    .map(|bbox| AnnotatedBox { class_index: b.class_index, bbox })
            })
            .collect()
    };
    Ok(AnnotatedImage { image, boxes })
}

fn default_rotation_range() -> (f64, f64) {
    (-30.0, 30.0)
}
fn default_brightness_range() -> (f64, f64) {
    (-0.2, 0.2)
}
fn default_shear_range() -> (f64, f64) {
    (-10.0, 10.0)
}
fn default_flip_probability() -> f64 {
    0.5
}
fn default_min_visibility() -> f64 {
    DEFAULT_MIN_VISIBILITY
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    #[serde(default = "default_rotation_range")]
    pub rotation_range: (f64, f64),
    #[serde(default = "default_brightness_range")]
    pub brightness_range: (f64, f64),
    #[serde(default = "default_shear_range")]
    pub shear_range: (f64, f64),
    #[serde(default = "default_flip_probability")]
    pub hflip_probability: f64,
    #[serde(default = "default_flip_probability")]
    pub vflip_probability: f64,
    #[serde(default = "default_min_visibility")]
    pub min_visibility: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            rotation_range: default_rotation_range(),
            brightness_range: default_brightness_range(),
            shear_range: default_shear_range(),
            hflip_probability: default_flip_probability(),
            vflip_probability: default_flip_probability(),
            min_visibility: DEFAULT_MIN_VISIBILITY,
            seed: 0,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        let range = |name: &str, (lo, hi): (f64, f64), limit: f64, inclusive: bool| {
            let within = |v: f64| if inclusive { v.abs() <= limit } else { v.abs() < limit };
            if !(lo <= 0.0 && 0.0 <= hi && within(lo) && within(hi)) {
                return Err(Error::invalid(format!("{name} range ({lo}, {hi}) must contain 0 and stay within ±{limit}")));
            }
            Ok(())
        };
        range("rotation", self.rotation_range, 180.0, true)?;
        range("brightness", self.brightness_range, 1.0, true)?;
        range("shear", self.shear_range, 90.0, false)?;
        for p in [self.hflip_probability, self.vflip_probability] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::invalid("flip probabilities must lie in [0, 1]"));
            }
        }
        if !(self.min_visibility > 0.0 && self.min_visibility <= 1.0) {
            return Err(Error::invalid("min_visibility must lie in (0, 1]"));
        }
        Ok(())
    }
}

/// Draws a transform uniformly from the configured ranges. The generator is
/// keyed by `(seed, draw_index)` so draws are independent of call order.
pub fn random_transform(config: &AugmentConfig, draw_index: u64) -> Result<TransformSpec> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(draw_index);
    let mut uniform = |(lo, hi): (f64, f64)| if lo == hi { lo } else { rng.random_range(lo..=hi) };
    let rotation = uniform(config.rotation_range);
    let brightness_delta = uniform(config.brightness_range);
    let shear_x = uniform(config.shear_range);
    let hflip = rng.random_bool(config.hflip_probability);
    let vflip = rng.random_bool(config.vflip_probability);
    Ok(TransformSpec { rotation, hflip, vflip, brightness_delta, shear_x })
}
