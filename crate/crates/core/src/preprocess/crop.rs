use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::data::FoveaCoordinate;
use crate::error::{Error, Result};

/// Smallest crop side accepted.
pub const MIN_CROP_SIDE: u32 = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CropSpec {
    /// Crop side as a fraction of `min(H, W)`; each in `(0, 1]`.
    pub zoom_levels: Vec<f64>,
}

impl Default for CropSpec {
    fn default() -> Self {
        Self {
            zoom_levels: vec![1.0, 0.75, 0.5],
        }
    }
}

impl CropSpec {
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if self.zoom_levels.is_empty() {
            errs.push("crops.zoom_levels must not be empty".into());
        }
        for z in &self.zoom_levels {
            if !(*z > 0.0 && *z <= 1.0) {
                errs.push(format!("crops.zoom_levels: {z} not in (0, 1]"));
            }
        }
        errs
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CropWindow {
    pub left: u32,
    pub top: u32,
    pub side: u32,
}

/// Square window of side `round(zoom * min(H, W))` centred on the fovea (or the image
/// center), shifted so it stays inside the image.
pub fn crop_window(width: u32, height: u32, fovea: Option<FoveaCoordinate>, zoom: f64) -> Result<CropWindow> {
    if !(zoom > 0.0 && zoom <= 1.0) {
        return Err(Error::InvalidArgument(format!("zoom level {zoom} not in (0, 1]")));
    }
    let side = (zoom * width.min(height) as f64).round() as u32;
    if side < MIN_CROP_SIDE {
        return Err(Error::InvalidArgument(format!(
            "crop side {side} below the minimum of {MIN_CROP_SIDE} pixels"
        )));
    }
    let (cx, cy) = match fovea {
        Some(f) => (f.x, f.y),
        None => (width as f64 / 2.0, height as f64 / 2.0),
    };
    let place = |center: f64, extent: u32| {
        let start = (center - side as f64 / 2.0).round();
        start.clamp(0.0, (extent - side) as f64) as u32
    };
    Ok(CropWindow {
        left: place(cx, width),
        top: place(cy, height),
        side,
    })
}

/// One crop per zoom level, in the order of `spec.zoom_levels`.
pub fn crop_macular(image: &RgbImage, fovea: Option<FoveaCoordinate>, spec: &CropSpec) -> Result<Vec<RgbImage>> {
    spec.zoom_levels
        .iter()
        .map(|&z| {
            let w = crop_window(image.width(), image.height(), fovea, z)?;
            Ok(image::imageops::crop_imm(image, w.left, w.top, w.side, w.side).to_image())
        })
        .collect()
}
