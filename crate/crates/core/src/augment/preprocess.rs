use crate::error::{Error, Result};
use crate::raster::RasterImage;

pub const SUPPORTED_SIDES: [u32; 3] = [256, 384, 640];
pub const IMAGENET_MEAN: [f32; 3] = [0.485, 0.456, 0.406];
pub const IMAGENET_STD: [f32; 3] = [0.229, 0.224, 0.225];

/// Channel-major `3 x side x side` buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub side: u32,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn at(&self, channel: usize, x: u32, y: u32) -> f32 {
        let plane = self.side as usize * self.side as usize;
        self.data[channel * plane + y as usize * self.side as usize + x as usize]
    }
}

/// Bilinear resize to a square model input, then either `x / 255` or
/// ImageNet normalization `(x / 255 - mean) / std` per channel.
pub fn preprocess(image: &RasterImage, target_side: u32, normalize: bool) -> Result<Tensor> {
    if !SUPPORTED_SIDES.contains(&target_side) {
        return Err(Error::invalid(format!(
            "input side {target_side} not one of {SUPPORTED_SIDES:?}"
        )));
    }
    let resized = image.resize_bilinear(target_side, target_side)?;
    let plane = target_side as usize * target_side as usize;
    let mut data = vec![0.0f32; plane * 3];
    for (i, px) in resized.pixels().chunks_exact(3).enumerate() {
        for c in 0..3 {
            let v = f32::from(px[c]) / 255.0;
            data[c * plane + i] = if normalize { (v - IMAGENET_MEAN[c]) / IMAGENET_STD[c] } else { v };
        }
    }
    Ok(Tensor { side: target_side, data })
}
