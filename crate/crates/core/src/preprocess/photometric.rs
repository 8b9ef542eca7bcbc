use image::{Rgb, RgbImage};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhotometricConfig {
    /// Maximum additive brightness shift, as a fraction of the 8-bit range.
    pub brightness_delta: f64,
    pub contrast_range: (f64, f64),
    pub saturation_range: (f64, f64),
    /// Maximum hue rotation, as a fraction of the full hue circle.
    pub hue_delta: f64,
    /// Probability each of the four distortions is applied.
    pub probability: f64,
}

impl Default for PhotometricConfig {
    fn default() -> Self {
        Self {
            brightness_delta: 32.0 / 255.0,
            contrast_range: (0.75, 1.25),
            saturation_range: (0.75, 1.25),
            hue_delta: 0.05,
            probability: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PhotometricDraw {
    pub brightness: f64,
    pub contrast: f64,
    pub saturation: f64,
    pub hue: f64,
}

impl PhotometricDraw {
    pub const IDENTITY: Self = Self {
        brightness: 0.0,
        contrast: 1.0,
        saturation: 1.0,
        hue: 0.0,
    };

    pub fn sample<R: Rng + ?Sized>(config: &PhotometricConfig, rng: &mut R) -> Self {
        let p = config.probability.clamp(0.0, 1.0);
        let mut d = Self::IDENTITY;
        let range = |rng: &mut R, (lo, hi): (f64, f64)| {
            if hi > lo {
                rng.gen_range(lo..hi)
            } else {
                lo
            }
        };
        if rng.gen_bool(p) && config.brightness_delta > 0.0 {
            d.brightness = rng.gen_range(-config.brightness_delta..=config.brightness_delta);
        }
        if rng.gen_bool(p) {
            d.contrast = range(rng, config.contrast_range);
        }
        if rng.gen_bool(p) {
            d.saturation = range(rng, config.saturation_range);
        }
        if rng.gen_bool(p) && config.hue_delta > 0.0 {
            d.hue = rng.gen_range(-config.hue_delta..=config.hue_delta);
        }
        d
    }
}

fn rgb_to_hsv(r: f64, g: f64, b: f64) -> (f64, f64, f64) {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let h = if delta == 0.0 {
        0.0
    } else if max == r {
        ((g - b) / delta).rem_euclid(6.0) / 6.0
    } else if max == g {
        ((b - r) / delta + 2.0) / 6.0
    } else {
        ((r - g) / delta + 4.0) / 6.0
    };
    let s = if max == 0.0 { 0.0 } else { delta / max };
    (h, s, max)
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> (f64, f64, f64) {
    let h6 = h.rem_euclid(1.0) * 6.0;
    let c = v * s;
    let x = c * (1.0 - (h6 % 2.0 - 1.0).abs());
    let (r, g, b) = match h6 as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    (r + m, g + m, b + m)
}

/// Brightness shift, contrast about the mean gray level, then saturation and hue in HSV.
pub fn photometric_distort(img: &RgbImage, d: &PhotometricDraw) -> RgbImage {
    if *d == PhotometricDraw::IDENTITY {
        return img.clone();
    }
    let n = (img.width() * img.height()).max(1) as f64;
    let mean = img
        .pixels()
        .map(|p| (p.0[0] as f64 + p.0[1] as f64 + p.0[2] as f64) / (3.0 * 255.0))
        .sum::<f64>()
        / n;
    let mut out = img.clone();
    for p in out.pixels_mut() {
        let mut c = p.0.map(|v| v as f64 / 255.0);
        for v in c.iter_mut() {
            *v = ((*v + d.brightness - mean) * d.contrast + mean).clamp(0.0, 1.0);
        }
        if d.saturation != 1.0 || d.hue != 0.0 {
            let (h, s, v) = rgb_to_hsv(c[0], c[1], c[2]);
            let (r, g, b) = hsv_to_rgb(h + d.hue, (s * d.saturation).clamp(0.0, 1.0), v);
            c = [r, g, b];
        }
        *p = Rgb(c.map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hsv_round_trip() {
        for &(r, g, b) in &[(0.2, 0.5, 0.9), (1.0, 0.0, 0.0), (0.3, 0.3, 0.3), (0.9, 0.8, 0.1)] {
            let (h, s, v) = rgb_to_hsv(r, g, b);
            let (r2, g2, b2) = hsv_to_rgb(h, s, v);
            assert!((r - r2).abs() < 1e-12 && (g - g2).abs() < 1e-12 && (b - b2).abs() < 1e-12);
        }
    }

    #[test]
    fn identity_draw_keeps_image() {
        let img = RgbImage::from_fn(5, 5, |x, y| Rgb([x as u8 * 40, y as u8 * 30, 100]));
        assert_eq!(photometric_distort(&img, &PhotometricDraw::IDENTITY), img);
    }

    #[test]
    fn brightness_shift_raises_every_channel() {
        let img = RgbImage::from_pixel(2, 2, Rgb([100, 120, 140]));
        let d = PhotometricDraw {
            brightness: 0.1,
            ..PhotometricDraw::IDENTITY
        };
        let out = photometric_distort(&img, &d);
        for (a, b) in img.pixels().zip(out.pixels()) {
            for ch in 0..3 {
                assert!(b.0[ch] > a.0[ch]);
            }
        }
    }
}
