//! Minimal raster plots written as PNG.

use std::path::Path;

use image::{Rgb, RgbImage};

use crate::{Error, Result};

const SIZE: u32 = 256;
const MARGIN: u32 = 24;
const AXIS: Rgb<u8> = Rgb([40, 40, 40]);
const GUIDE: Rgb<u8> = Rgb([200, 200, 200]);
const INK: Rgb<u8> = Rgb([200, 40, 40]);

fn canvas() -> RgbImage {
    let mut img = RgbImage::from_pixel(SIZE, SIZE, Rgb([255, 255, 255]));
    let end = SIZE - MARGIN;
    for t in MARGIN..=end {
        img.put_pixel(t, end, AXIS);
        img.put_pixel(MARGIN, t, AXIS);
    }
    img
}

/// Unit-square coordinates to pixels, y up.
fn to_px(x: f64, y: f64) -> (f64, f64) {
    let span = (SIZE - 2 * MARGIN) as f64;
    (MARGIN as f64 + x.clamp(0.0, 1.0) * span, (SIZE - MARGIN) as f64 - y.clamp(0.0, 1.0) * span)
}

fn line(img: &mut RgbImage, a: (f64, f64), b: (f64, f64), color: Rgb<u8>) {
    let steps = (b.0 - a.0).abs().max((b.1 - a.1).abs()).ceil().max(1.0) as usize;
    for i in 0..=steps {
        let t = i as f64 / steps as f64;
        let (x, y) = (a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1));
        img.put_pixel(x.round() as u32, y.round() as u32, color);
    }
}

fn save(img: &RgbImage, path: &Path) -> Result<()> {
    img.save(path).map_err(|e| Error::image(path, e))
}

/// ROC curve over the chance diagonal.
pub fn plot_roc(points: &[(f64, f64)], path: &Path) -> Result<()> {
    let mut img = canvas();
    line(&mut img, to_px(0.0, 0.0), to_px(1.0, 1.0), GUIDE);
    for w in points.windows(2) {
        line(&mut img, to_px(w[0].0, w[0].1), to_px(w[1].0, w[1].1), INK);
    }
    save(&img, path)
}

/// Histogram of `values` over `[min, max]` with `bins` bars scaled to the tallest.
pub fn plot_histogram(values: &[f64], bins: usize, path: &Path) -> Result<()> {
    let mut img = canvas();
    let bins = bins.max(1);
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    if !finite.is_empty() {
        let lo = finite.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let width = if hi > lo { hi - lo } else { 1.0 };
        let mut counts = vec![0usize; bins];
        for v in &finite {
            let b = (((v - lo) / width) * bins as f64) as usize;
            counts[b.min(bins - 1)] += 1;
        }
        let top = *counts.iter().max().expect("non-empty") as f64;
        for (b, &c) in counts.iter().enumerate() {
            let (x0, _) = to_px(b as f64 / bins as f64, 0.0);
            let (x1, y1) = to_px((b + 1) as f64 / bins as f64, c as f64 / top);
            let (_, y0) = to_px(0.0, 0.0);
            for x in x0.round() as u32..(x1.round() as u32).max(x0.round() as u32 + 1) {
                line(&mut img, (x as f64, y0 - 1.0), (x as f64, y1), INK);
            }
        }
    }
    save(&img, path)
}

/// Line through `values` at equal x spacing, y scaled to their range.
pub fn plot_series(values: &[f64], path: &Path) -> Result<()> {
    let mut img = canvas();
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    if let (Some(lo), Some(hi)) = (
        finite.iter().copied().reduce(f64::min),
        finite.iter().copied().reduce(f64::max),
    ) {
        let span = if hi > lo { hi - lo } else { 1.0 };
        let last = (finite.len() - 1).max(1) as f64;
        let pts: Vec<(f64, f64)> = finite
            .iter()
            .enumerate()
            .map(|(i, v)| to_px(i as f64 / last, (v - lo) / span))
            .collect();
        for w in pts.windows(2) {
            line(&mut img, w[0], w[1], INK);
        }
        if pts.len() == 1 {
            img.put_pixel(pts[0].0 as u32, pts[0].1 as u32, INK);
        }
    }
    save(&img, path)
}
