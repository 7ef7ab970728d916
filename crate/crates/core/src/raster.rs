//! RGB8 raster images, decoding, cropping and bilinear resampling.

use std::io::Cursor;

use image::{ImageFormat, ImageReader};

use crate::error::{Error, Result};
use crate::geometry::Rect;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RasterImage {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl RasterImage {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("image dimensions must be at least 1x1"));
        }
        let expected = width as usize * height as usize * 3;
        if pixels.len() != expected {
            return Err(Error::invalid(format!(
                "pixel buffer has {} bytes, expected {expected}",
                pixels.len()
            )));
        }
        Ok(Self { width, height, pixels })
    }

    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Result<Self> {
        let pixels = rgb.repeat(width as usize * height as usize);
        Self::new(width, height, pixels)
    }

    pub fn from_fn(width: u32, height: u32, f: impl Fn(u32, u32) -> [u8; 3]) -> Result<Self> {
        let mut pixels = Vec::with_capacity(width as usize * height as usize * 3);
        for y in 0..height {
            for x in 0..width {
                pixels.extend_from_slice(&f(x, y));
            }
        }
        Self::new(width, height, pixels)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.pixels
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    /// Decodes JPEG or PNG bytes; anything else is `UnsupportedMedia`.
    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let format = sniff_format(bytes)
            .ok_or_else(|| Error::UnsupportedMedia("expected JPEG or PNG data".into()))?;
        let img = ImageReader::with_format(Cursor::new(bytes), format)
            .decode()
            .map_err(|e| Error::UnsupportedMedia(e.to_string()))?
            .into_rgb8();
        let (w, h) = img.dimensions();
        Self::new(w, h, img.into_raw())
    }

    pub fn encode_png(&self) -> Result<Vec<u8>> {
        let buf = image::RgbImage::from_raw(self.width, self.height, self.pixels.clone())
            .expect("buffer length checked at construction");
        let mut out = Cursor::new(Vec::new());
        buf.write_to(&mut out, ImageFormat::Png)
            .map_err(|e| Error::invalid(format!("png encode failed: {e}")))?;
        Ok(out.into_inner())
    }

    /// Bilinear sample at continuous pixel-index coordinates (pixel `i` has
    /// its center at `i`). Neighbours outside the frame read as black.
    pub fn sample_black_fill(&self, x: f64, y: f64) -> [f64; 3] {
        let x0 = x.floor();
        let y0 = y.floor();
        let fx = x - x0;
        let fy = y - y0;
        let mut acc = [0.0; 3];
        for (dy, wy) in [(0.0, 1.0 - fy), (1.0, fy)] {
            for (dx, wx) in [(0.0, 1.0 - fx), (1.0, fx)] {
                let weight = wx * wy;
                if weight == 0.0 {
                    continue;
                }
                let px = x0 + dx;
                let py = y0 + dy;
                if px < 0.0 || py < 0.0 || px >= f64::from(self.width) || py >= f64::from(self.height) {
                    continue;
                }
                let p = self.pixel(px as u32, py as u32);
                for c in 0..3 {
                    acc[c] += weight * f64::from(p[c]);
                }
            }
        }
        acc
    }

    /// Bilinear sample with edge replication, used for resizing.
    pub fn sample_clamped(&self, x: f64, y: f64) -> [f64; 3] {
        let max_x = f64::from(self.width - 1);
        let max_y = f64::from(self.height - 1);
        let x = x.clamp(0.0, max_x);
        let y = y.clamp(0.0, max_y);
        let x0 = x.floor();
        let y0 = y.floor();
        let x1 = (x0 + 1.0).min(max_x);
        let y1 = (y0 + 1.0).min(max_y);
        let fx = x - x0;
        let fy = y - y0;
        let p00 = self.pixel(x0 as u32, y0 as u32);
        let p10 = self.pixel(x1 as u32, y0 as u32);
        let p01 = self.pixel(x0 as u32, y1 as u32);
        let p11 = self.pixel(x1 as u32, y1 as u32);
        let mut out = [0.0; 3];
        for c in 0..3 {
            let top = f64::from(p00[c]) * (1.0 - fx) + f64::from(p10[c]) * fx;
            let bottom = f64::from(p01[c]) * (1.0 - fx) + f64::from(p11[c]) * fx;
            out[c] = top * (1.0 - fy) + bottom * fy;
        }
        out
    }

    /// Bilinear resize with pixel-center alignment. Resizing to the current
    /// size reproduces the image exactly.
    pub fn resize_bilinear(&self, width: u32, height: u32) -> Result<RasterImage> {
        if width == self.width && height == self.height {
            return Ok(self.clone());
        }
        let sx = f64::from(self.width) / f64::from(width);
        let sy = f64::from(self.height) / f64::from(height);
        RasterImage::from_fn(width, height, |x, y| {
            let src_x = (f64::from(x) + 0.5) * sx - 0.5;
            let src_y = (f64::from(y) + 0.5) * sy - 0.5;
            to_u8(self.sample_clamped(src_x, src_y))
        })
    }

    /// Crops a pixel-space rectangle, clipped to the frame. The crop always
    /// keeps at least one pixel.
    pub fn crop(&self, rect: &Rect) -> Result<RasterImage> {
        let w = f64::from(self.width);
        let h = f64::from(self.height);
        let x1 = rect.x1.clamp(0.0, w - 1.0).floor() as u32;
        let y1 = rect.y1.clamp(0.0, h - 1.0).floor() as u32;
        let x2 = (rect.x2.clamp(0.0, w).ceil() as u32).max(x1 + 1);
        let y2 = (rect.y2.clamp(0.0, h).ceil() as u32).max(y1 + 1);
        let cw = x2 - x1;
        let ch = y2 - y1;
        let mut pixels = Vec::with_capacity(cw as usize * ch as usize * 3);
        for y in y1..y2 {
            let start = (y as usize * self.width as usize + x1 as usize) * 3;
            pixels.extend_from_slice(&self.pixels[start..start + cw as usize * 3]);
        }
        RasterImage::new(cw, ch, pixels)
    }
}

pub(crate) fn to_u8(v: [f64; 3]) -> [u8; 3] {
    v.map(|c| c.round().clamp(0.0, 255.0) as u8)
}

fn sniff_format(bytes: &[u8]) -> Option<ImageFormat> {
    if bytes.starts_with(&[0xFF, 0xD8, 0xFF]) {
        Some(ImageFormat::Jpeg)
    } else if bytes.starts_with(b"\x89PNG\r\n\x1a\n") {
        Some(ImageFormat::Png)
    } else {
        None
    }
}
