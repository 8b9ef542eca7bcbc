//! Plain raster types and their PNG encodings.
//!
//! Arrays are indexed `[[row, col]]`; the `image` crate's `(x, y)` is `(col, row)`.

use std::path::Path;

use image::{GrayImage, ImageBuffer, Luma, RgbImage};
use ndarray::Array2;

use crate::error::{Error, Result};

/// Single-channel real-valued raster.
pub type Raster = Array2<f64>;

/// Binary raster; `true` is foreground.
pub type Mask = Array2<bool>;

/// Any value above this maps to foreground when reading mask files.
pub const MASK_LEVEL: u8 = 127;

pub fn mask_from_gray(img: &GrayImage) -> Mask {
    let (w, h) = img.dimensions();
    Array2::from_shape_fn((h as usize, w as usize), |(r, c)| {
        img.get_pixel(c as u32, r as u32).0[0] > MASK_LEVEL
    })
}

pub fn mask_to_gray(mask: &Mask) -> GrayImage {
    let (h, w) = mask.dim();
    GrayImage::from_fn(w as u32, h as u32, |x, y| {
        Luma([if mask[[y as usize, x as usize]] { 255 } else { 0 }])
    })
}

pub fn gray_to_raster(img: &GrayImage) -> Raster {
    let (w, h) = img.dimensions();
    Array2::from_shape_fn((h as usize, w as usize), |(r, c)| {
        img.get_pixel(c as u32, r as u32).0[0] as f64
    })
}

/// Rounds and clamps to `0..=255`.
pub fn raster_to_gray(raster: &Raster) -> GrayImage {
    let (h, w) = raster.dim();
    GrayImage::from_fn(w as u32, h as u32, |x, y| {
        Luma([raster[[y as usize, x as usize]].round().clamp(0.0, 255.0) as u8])
    })
}

pub fn foreground_count(mask: &Mask) -> usize {
    mask.iter().filter(|&&v| v).count()
}

pub fn load_rgb(path: &Path) -> Result<RgbImage> {
    Ok(image::open(path)
        .map_err(|e| Error::image(path, e))?
        .to_rgb8())
}

pub fn load_mask(path: &Path) -> Result<Mask> {
    let img = image::open(path).map_err(|e| Error::image(path, e))?;
    Ok(mask_from_gray(&img.to_luma8()))
}

pub fn save_mask(path: &Path, mask: &Mask) -> Result<()> {
    mask_to_gray(mask)
        .save(path)
        .map_err(|e| Error::image(path, e))
}

/// Writes a `[0, 1]` raster as a 16-bit PNG with value `round(65535 * v)`.
pub fn save_map16(path: &Path, map: &Raster) -> Result<()> {
    let (h, w) = map.dim();
    let img: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_fn(w as u32, h as u32, |x, y| {
            let v = map[[y as usize, x as usize]].clamp(0.0, 1.0);
            Luma([(v * 65535.0).round() as u16])
        });
    img.save(path).map_err(|e| Error::image(path, e))
}

pub fn load_map16(path: &Path) -> Result<Raster> {
    let img = image::open(path)
        .map_err(|e| Error::image(path, e))?
        .to_luma16();
    let (w, h) = img.dimensions();
    Ok(Array2::from_shape_fn((h as usize, w as usize), |(r, c)| {
        img.get_pixel(c as u32, r as u32).0[0] as f64 / 65535.0
    }))
}

/// Bilinear resampling with pixel-center alignment (edge pixels replicated).
pub fn resize_bilinear(src: &Raster, height: usize, width: usize) -> Raster {
    let (sh, sw) = src.dim();
    if (sh, sw) == (height, width) {
        return src.clone();
    }
    let sy = sh as f64 / height as f64;
    let sx = sw as f64 / width as f64;
    Array2::from_shape_fn((height, width), |(r, c)| {
        let fy = ((r as f64 + 0.5) * sy - 0.5).clamp(0.0, (sh - 1) as f64);
        let fx = ((c as f64 + 0.5) * sx - 0.5).clamp(0.0, (sw - 1) as f64);
        let (y0, x0) = (fy.floor() as usize, fx.floor() as usize);
        let (y1, x1) = ((y0 + 1).min(sh - 1), (x0 + 1).min(sw - 1));
        let (ty, tx) = (fy - y0 as f64, fx - x0 as f64);
        let top = src[[y0, x0]] * (1.0 - tx) + src[[y0, x1]] * tx;
        let bottom = src[[y1, x0]] * (1.0 - tx) + src[[y1, x1]] * tx;
        top * (1.0 - ty) + bottom * ty
    })
}

/// Nearest-neighbour resampling, pixel-center aligned.
pub fn resize_nearest<T: Clone>(src: &Array2<T>, height: usize, width: usize) -> Array2<T> {
    let (sh, sw) = src.dim();
    Array2::from_shape_fn((height, width), |(r, c)| {
        let y = (((r as f64 + 0.5) * sh as f64 / height as f64) as usize).min(sh - 1);
        let x = (((c as f64 + 0.5) * sw as f64 / width as f64) as usize).min(sw - 1);
        src[[y, x]].clone()
    })
}

/// Splits an RGB image into three `[0, 255]` planes.
pub fn rgb_planes(img: &RgbImage) -> [Raster; 3] {
    let (w, h) = img.dimensions();
    let plane = |ch: usize| {
        Array2::from_shape_fn((h as usize, w as usize), |(r, c)| {
            img.get_pixel(c as u32, r as u32).0[ch] as f64
        })
    };
    [plane(0), plane(1), plane(2)]
}

pub fn rgb_from_planes(planes: &[Raster; 3]) -> RgbImage {
    let (h, w) = planes[0].dim();
    RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let at = |p: &Raster| p[[y as usize, x as usize]].round().clamp(0.0, 255.0) as u8;
        image::Rgb([at(&planes[0]), at(&planes[1]), at(&planes[2])])
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mask_threshold_maps_high_values_to_foreground() {
        let img = GrayImage::from_raw(4, 1, vec![0, 127, 128, 255]).unwrap();
        let mask = mask_from_gray(&img);
        assert_eq!(mask.iter().copied().collect::<Vec<_>>(), vec![false, false, true, true]);
    }

    #[test]
    fn map16_round_trip_is_within_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.png");
        let map = Array2::from_shape_fn((5, 7), |(r, c)| (r * 7 + c) as f64 / 34.0);
        save_map16(&path, &map).unwrap();
        let back = load_map16(&path).unwrap();
        for (a, b) in map.iter().zip(back.iter()) {
            assert!((a - b).abs() <= 0.5 / 65535.0 + 1e-12);
        }
    }

    #[test]
    fn bilinear_identity_when_size_unchanged() {
        let src = Array2::from_shape_fn((3, 4), |(r, c)| (r + c) as f64);
        assert_eq!(resize_bilinear(&src, 3, 4), src);
    }
}
