//! Flips and rotations applied identically to an image and everything aligned with it.

use image::RgbImage;
use ndarray::Array2;
use rand::Rng;

use crate::data::FoveaCoordinate;
use crate::raster::{rgb_from_planes, rgb_planes, Mask, Raster};

use super::AugmentationConfig;

/// A raster or point living in the same pixel frame as the image.
#[derive(Debug, Clone, PartialEq)]
pub enum AlignedTarget {
    Mask(Mask),
    Map(Raster),
    Point(FoveaCoordinate),
}

/// One concrete draw of the geometric augmentation.
///
/// Applied in order: horizontal flip, quarter turns clockwise, then a small rotation by
/// `angle_degrees` about the frame center with reflect padding.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GeometricTransform {
    pub flip_horizontal: bool,
    pub quarter_turns: u8,
    pub angle_degrees: f64,
}

impl GeometricTransform {
    pub fn sample<R: Rng + ?Sized>(config: &AugmentationConfig, rng: &mut R) -> Self {
        let flip_horizontal = rng.gen_bool(config.flip_probability.clamp(0.0, 1.0));
        let quarter_turns = if config.quarter_turns { rng.gen_range(0..4) } else { 0 };
        let max = config.max_rotation_degrees.abs();
        let angle_degrees = if max > 0.0 { rng.gen_range(-max..=max) } else { 0.0 };
        Self {
            flip_horizontal,
            quarter_turns,
            angle_degrees,
        }
    }

    pub fn is_identity(&self) -> bool {
        !self.flip_horizontal && self.quarter_turns % 4 == 0 && self.angle_degrees == 0.0
    }

    /// Output frame size for an input of `height x width`.
    pub fn output_dim(&self, height: usize, width: usize) -> (usize, usize) {
        if self.quarter_turns % 2 == 1 {
            (width, height)
        } else {
            (height, width)
        }
    }

    fn discrete<T: Clone>(&self, src: &Array2<T>) -> Array2<T> {
        let mut cur = if self.flip_horizontal {
            flip_horizontal(src)
        } else {
            src.clone()
        };
        for _ in 0..self.quarter_turns % 4 {
            cur = rotate_quarter(&cur);
        }
        cur
    }

    pub fn apply_map(&self, src: &Raster) -> Raster {
        let cur = self.discrete(src);
        if self.angle_degrees == 0.0 {
            cur
        } else {
            rotate_small(&cur, self.angle_degrees, |m, y, x| bilinear(m, y, x))
        }
    }

    pub fn apply_mask(&self, src: &Mask) -> Mask {
        let cur = self.discrete(src);
        if self.angle_degrees == 0.0 {
            cur
        } else {
            rotate_small(&cur, self.angle_degrees, |m, y, x| {
                m[[y.round() as usize, x.round() as usize]]
            })
        }
    }

    pub fn apply_image(&self, img: &RgbImage) -> RgbImage {
        if self.is_identity() {
            return img.clone();
        }
        let planes = rgb_planes(img).map(|p| self.apply_map(&p));
        rgb_from_planes(&planes)
    }

    /// Maps a point with the same affine transform the rasters use.
    pub fn apply_point(&self, p: FoveaCoordinate, height: usize, width: usize) -> FoveaCoordinate {
        let (mut h, mut w) = (height as f64, width as f64);
        let (mut x, mut y) = (p.x, p.y);
        if self.flip_horizontal {
            x = w - 1.0 - x;
        }
        for _ in 0..self.quarter_turns % 4 {
            // (row, col) -> (col, H - 1 - row)
            let (nx, ny) = (h - 1.0 - y, x);
            x = nx;
            y = ny;
            std::mem::swap(&mut h, &mut w);
        }
        if self.angle_degrees != 0.0 {
            let (cy, cx) = ((h - 1.0) / 2.0, (w - 1.0) / 2.0);
            let (s, c) = self.angle_degrees.to_radians().sin_cos();
            let (dx, dy) = (x - cx, y - cy);
            x = cx + c * dx - s * dy;
            y = cy + s * dx + c * dy;
        }
        FoveaCoordinate {
            x: x.clamp(0.0, w - 1.0),
            y: y.clamp(0.0, h - 1.0),
        }
    }

    pub fn apply_target(&self, target: &AlignedTarget, height: usize, width: usize) -> AlignedTarget {
        match target {
            AlignedTarget::Mask(m) => AlignedTarget::Mask(self.apply_mask(m)),
            AlignedTarget::Map(m) => AlignedTarget::Map(self.apply_map(m)),
            AlignedTarget::Point(p) => AlignedTarget::Point(self.apply_point(*p, height, width)),
        }
    }
}

/// Draws one transform and applies it to the image and all aligned targets.
pub fn geometric_augment<R: Rng + ?Sized>(
    image: &RgbImage,
    targets: &[AlignedTarget],
    config: &AugmentationConfig,
    rng: &mut R,
) -> (RgbImage, Vec<AlignedTarget>, GeometricTransform) {
    let t = GeometricTransform::sample(config, rng);
    let (h, w) = (image.height() as usize, image.width() as usize);
    let out = t.apply_image(image);
    let targets = targets.iter().map(|x| t.apply_target(x, h, w)).collect();
    (out, targets, t)
}

pub fn flip_horizontal<T: Clone>(src: &Array2<T>) -> Array2<T> {
    let (h, w) = src.dim();
    Array2::from_shape_fn((h, w), |(r, c)| src[[r, w - 1 - c]].clone())
}

/// Clockwise quarter turn: an `H x W` raster becomes `W x H` with `(r, c) -> (c, H - 1 - r)`.
pub fn rotate_quarter<T: Clone>(src: &Array2<T>) -> Array2<T> {
    let (h, w) = src.dim();
    Array2::from_shape_fn((w, h), |(r, c)| src[[h - 1 - c, r]].clone())
}

fn reflect(v: f64, n: usize) -> f64 {
    if n == 1 {
        return 0.0;
    }
    let period = 2.0 * (n - 1) as f64;
    let m = v.rem_euclid(period);
    if m > (n - 1) as f64 {
        period - m
    } else {
        m
    }
}

fn bilinear(m: &Raster, y: f64, x: f64) -> f64 {
    let (h, w) = m.dim();
    let (y0, x0) = (y.floor() as usize, x.floor() as usize);
    let (y1, x1) = ((y0 + 1).min(h - 1), (x0 + 1).min(w - 1));
    let (ty, tx) = (y - y0 as f64, x - x0 as f64);
    let top = m[[y0, x0]] * (1.0 - tx) + m[[y0, x1]] * tx;
    let bottom = m[[y1, x0]] * (1.0 - tx) + m[[y1, x1]] * tx;
    top * (1.0 - ty) + bottom * ty
}

fn rotate_small<T, F>(src: &Array2<T>, degrees: f64, sample: F) -> Array2<T>
where
    F: Fn(&Array2<T>, f64, f64) -> T,
{
    let (h, w) = src.dim();
    let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
    let (s, c) = degrees.to_radians().sin_cos();
    Array2::from_shape_fn((h, w), |(r, col)| {
        // inverse rotation from output to source
        let (dx, dy) = (col as f64 - cx, r as f64 - cy);
        let sx = cx + c * dx + s * dy;
        let sy = cy - s * dx + c * dy;
        sample(src, reflect(sy, h), reflect(sx, w))
    })
}
