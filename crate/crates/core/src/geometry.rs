//! Boxes and geographic points.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of grid steps per unit used for normalized coordinates written to
/// annotation files (six decimal places).
pub const ANNOTATION_GRID: f64 = 1_000_000.0;

/// Axis-aligned box in center/size form, as fractions of the image size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizedBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl NormalizedBox {
    pub fn new(cx: f64, cy: f64, w: f64, h: f64) -> Result<Self> {
        let b = Self { cx, cy, w, h };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        let in_unit = |v: f64| (0.0..=1.0).contains(&v);
        let in_size = |v: f64| v > 0.0 && v <= 1.0;
        if in_unit(self.cx) && in_unit(self.cy) && in_size(self.w) && in_size(self.h) {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid normalized box {self:?}")))
        }
    }

    pub fn is_valid(&self) -> bool {
        self.validate().is_ok()
    }

    /// Clamps each field into its valid range; a no-op on valid boxes.
    pub fn clamped(&self) -> Self {
        let size = |v: f64| v.clamp(f64::MIN_POSITIVE, 1.0);
        Self {
            cx: self.cx.clamp(0.0, 1.0),
            cy: self.cy.clamp(0.0, 1.0),
            w: size(self.w),
            h: size(self.h),
        }
    }

    pub fn to_rect(&self) -> Rect {
        Rect {
            x1: self.cx - self.w / 2.0,
            y1: self.cy - self.h / 2.0,
            x2: self.cx + self.w / 2.0,
            y2: self.cy + self.h / 2.0,
        }
    }

    pub fn to_pixels(&self, width: u32, height: u32) -> Rect {
        self.to_rect().scale(f64::from(width), f64::from(height))
    }

    /// Snaps the box onto the annotation grid without letting it grow past
    /// the edges of `[0, 1]`. Returns `None` if a side collapses to zero.
    pub fn from_rect_on_grid(rect: &Rect) -> Option<Self> {
        let (cx, w) = snap_axis(rect.x1, rect.x2)?;
        let (cy, h) = snap_axis(rect.y1, rect.y2)?;
        Some(Self { cx, cy, w, h })
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }
}

fn snap_axis(lo: f64, hi: f64) -> Option<(f64, f64)> {
    let lo = lo.clamp(0.0, 1.0);
    let hi = hi.clamp(0.0, 1.0);
    let mut center = ((lo + hi) / 2.0 * ANNOTATION_GRID).round() as i64;
    let mut size = ((hi - lo) * ANNOTATION_GRID).round() as i64;
    let full = ANNOTATION_GRID as i64;
    // rounding both center and size can push an edge half a step outside
    if 2 * center - size < 0 || 2 * center + size > 2 * full {
        size -= 1;
    }
    center = center.clamp(0, full);
    if size <= 0 {
        return None;
    }
    Some((center as f64 / ANNOTATION_GRID, size as f64 / ANNOTATION_GRID))
}

/// Corner-form rectangle in an arbitrary (pixel or normalized) frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl Rect {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Self {
        Self { x1, y1, x2, y2 }
    }

    pub fn width(&self) -> f64 {
        (self.x2 - self.x1).max(0.0)
    }

    pub fn height(&self) -> f64 {
        (self.y2 - self.y1).max(0.0)
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn is_degenerate(&self) -> bool {
        !(self.x2 > self.x1 && self.y2 > self.y1) || !self.area().is_finite()
    }

    pub fn intersection(&self, other: &Rect) -> Rect {
        Rect {
            x1: self.x1.max(other.x1),
            y1: self.y1.max(other.y1),
            x2: self.x2.min(other.x2),
            y2: self.y2.min(other.y2),
        }
    }

    pub fn scale(&self, sx: f64, sy: f64) -> Rect {
        Rect {
            x1: self.x1 * sx,
            y1: self.y1 * sy,
            x2: self.x2 * sx,
            y2: self.y2 * sy,
        }
    }

    pub fn corners(&self) -> [(f64, f64); 4] {
        [
            (self.x1, self.y1),
            (self.x2, self.y1),
            (self.x2, self.y2),
            (self.x1, self.y2),
        ]
    }

    /// Axis-aligned hull of a point set.
    pub fn hull(points: &[(f64, f64)]) -> Rect {
        let mut r = Rect::new(f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for &(x, y) in points {
            r.x1 = r.x1.min(x);
            r.y1 = r.y1.min(y);
            r.x2 = r.x2.max(x);
            r.y2 = r.y2.max(y);
        }
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub latitude: f64,
    pub longitude: f64,
}

impl GeoPoint {
    pub fn new(latitude: f64, longitude: f64) -> Result<Self> {
        if !(-90.0..=90.0).contains(&latitude) || !(-180.0..=180.0).contains(&longitude) {
            return Err(Error::invalid(format!(
                "coordinates out of range: lat {latitude}, lon {longitude}"
            )));
        }
        Ok(Self { latitude, longitude })
    }
}

/// Closed latitude/longitude rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoRect {
    pub min_lat: f64,
    pub min_lon: f64,
    pub max_lat: f64,
    pub max_lon: f64,
}

impl GeoRect {
    pub fn new(min_lat: f64, min_lon: f64, max_lat: f64, max_lon: f64) -> Result<Self> {
        GeoPoint::new(min_lat, min_lon)?;
        GeoPoint::new(max_lat, max_lon)?;
        if min_lat > max_lat || min_lon > max_lon {
            return Err(Error::invalid("inverted rectangle"));
        }
        Ok(Self { min_lat, min_lon, max_lat, max_lon })
    }

    pub fn contains(&self, p: &GeoPoint) -> bool {
        (self.min_lat..=self.max_lat).contains(&p.latitude)
            && (self.min_lon..=self.max_lon).contains(&p.longitude)
    }
}
