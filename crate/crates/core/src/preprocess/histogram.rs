//! Histogram-based intensity transforms on 8-bit planes.
//!
//! Constant planes come back unchanged from equalization and rescaling: their
//! CDF normalization is undefined.

use image::{GrayImage, Luma};

fn histogram(img: &GrayImage) -> [u64; 256] {
    let mut h = [0u64; 256];
    for p in img.pixels() {
        h[p.0[0] as usize] += 1;
    }
    h
}

fn cumulative(hist: &[u64; 256]) -> [u64; 256] {
    let mut c = [0u64; 256];
    let mut acc = 0;
    for (i, &v) in hist.iter().enumerate() {
        acc += v;
        c[i] = acc;
    }
    c
}

fn is_constant(img: &GrayImage) -> bool {
    let mut px = img.pixels();
    match px.next() {
        Some(first) => px.all(|p| p == first),
        None => true,
    }
}

fn map_lut(img: &GrayImage, lut: &[u8; 256]) -> GrayImage {
    let mut out = img.clone();
    for p in out.pixels_mut() {
        p.0[0] = lut[p.0[0] as usize];
    }
    out
}

/// Global histogram equalization: `v -> round(255 (cdf(v) - cdf_min) / (n - cdf_min))`.
pub fn equalize(img: &GrayImage) -> GrayImage {
    if is_constant(img) {
        return img.clone();
    }
    let cdf = cumulative(&histogram(img));
    let n = cdf[255];
    let cdf_min = cdf.iter().copied().find(|&c| c > 0).unwrap_or(0);
    let denom = (n - cdf_min) as f64;
    let mut lut = [0u8; 256];
    for (v, slot) in lut.iter_mut().enumerate() {
        let num = cdf[v].saturating_sub(cdf_min) as f64;
        *slot = (255.0 * num / denom).round().clamp(0.0, 255.0) as u8;
    }
    map_lut(img, &lut)
}

/// Contrast-limited adaptive equalization over a `tiles x tiles` grid.
///
/// `clip` is relative to the mean bin height of a tile; excess mass is spread
/// uniformly over all bins. Per-tile maps are blended bilinearly between tile centers.
pub fn adaptive_equalize(img: &GrayImage, tiles: u32, clip: f64) -> GrayImage {
    if is_constant(img) {
        return img.clone();
    }
    let (w, h) = img.dimensions();
    let tiles_x = tiles.clamp(1, w);
    let tiles_y = tiles.clamp(1, h);
    let bounds = |n: u32, t: u32, i: u32| (i * n / t, (i + 1) * n / t);

    let mut luts = vec![[0f64; 256]; (tiles_x * tiles_y) as usize];
    for ty in 0..tiles_y {
        for tx in 0..tiles_x {
            let (x0, x1) = bounds(w, tiles_x, tx);
            let (y0, y1) = bounds(h, tiles_y, ty);
            let mut hist = [0f64; 256];
            for y in y0..y1 {
                for x in x0..x1 {
                    hist[img.get_pixel(x, y).0[0] as usize] += 1.0;
                }
            }
            let count = ((x1 - x0) * (y1 - y0)) as f64;
            if clip > 0.0 {
                let limit = (clip * count / 256.0).max(1.0);
                let mut excess = 0.0;
                for b in hist.iter_mut() {
                    if *b > limit {
                        excess += *b - limit;
                        *b = limit;
                    }
                }
                let share = excess / 256.0;
                for b in hist.iter_mut() {
                    *b += share;
                }
            }
            let lut = &mut luts[(ty * tiles_x + tx) as usize];
            let mut acc = 0.0;
            for (v, b) in hist.iter().enumerate() {
                acc += b;
                lut[v] = 255.0 * acc / count;
            }
        }
    }

    let tile_w = w as f64 / tiles_x as f64;
    let tile_h = h as f64 / tiles_y as f64;
    let locate = |pos: f64, size: f64, n: u32| -> (usize, usize, f64) {
        let f = (pos + 0.5) / size - 0.5;
        if f <= 0.0 {
            (0, 0, 0.0)
        } else if f >= (n - 1) as f64 {
            ((n - 1) as usize, (n - 1) as usize, 0.0)
        } else {
            let i = f.floor() as usize;
            (i, i + 1, f - i as f64)
        }
    };
    let mut out = GrayImage::new(w, h);
    for y in 0..h {
        let (ty0, ty1, fy) = locate(y as f64, tile_h, tiles_y);
        for x in 0..w {
            let (tx0, tx1, fx) = locate(x as f64, tile_w, tiles_x);
            let v = img.get_pixel(x, y).0[0] as usize;
            let at = |ty: usize, tx: usize| luts[ty * tiles_x as usize + tx][v];
            let top = at(ty0, tx0) * (1.0 - fx) + at(ty0, tx1) * fx;
            let bottom = at(ty1, tx0) * (1.0 - fx) + at(ty1, tx1) * fx;
            let value = top * (1.0 - fy) + bottom * fy;
            out.put_pixel(x, y, Luma([value.round().clamp(0.0, 255.0) as u8]));
        }
    }
    out
}

/// Value at percentile `pct` (linear interpolation between order statistics).
pub fn percentile(img: &GrayImage, pct: f64) -> f64 {
    let cdf = cumulative(&histogram(img));
    let n = cdf[255];
    if n == 0 {
        return 0.0;
    }
    let rank = (pct / 100.0).clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = rank.floor() as u64;
    let hi = rank.ceil() as u64;
    let value_at = |k: u64| cdf.iter().position(|&c| c > k).unwrap_or(255) as f64;
    let (a, b) = (value_at(lo), value_at(hi));
    a + (b - a) * (rank - lo as f64)
}

/// Linear stretch mapping the `low_pct` value to 0 and the `high_pct` value to 255, clipped.
pub fn intensity_rescale(img: &GrayImage, low_pct: f64, high_pct: f64) -> GrayImage {
    let lo = percentile(img, low_pct);
    let hi = percentile(img, high_pct);
    if hi <= lo {
        return img.clone();
    }
    let mut lut = [0u8; 256];
    for (v, slot) in lut.iter_mut().enumerate() {
        *slot = (255.0 * (v as f64 - lo) / (hi - lo)).round().clamp(0.0, 255.0) as u8;
    }
    map_lut(img, &lut)
}

/// Monotone CDF matching: each level `s` maps to the smallest reference level `r`
/// with `F_ref(r) >= F_src(s)`.
pub fn histogram_match(img: &GrayImage, reference: &GrayImage) -> GrayImage {
    let src = cumulative(&histogram(img));
    let refc = cumulative(&histogram(reference));
    let (ns, nr) = (src[255] as u128, refc[255] as u128);
    if ns == 0 || nr == 0 {
        return img.clone();
    }
    let mut lut = [0u8; 256];
    let mut r = 0usize;
    for s in 0..256 {
        // F_ref(r) >= F_src(s)  <=>  refc[r] * ns >= src[s] * nr, exact in integers
        while r < 255 && (refc[r] as u128) * ns < (src[s] as u128) * nr {
            r += 1;
        }
        lut[s] = r as u8;
    }
    map_lut(img, &lut)
}

/// Empirical CDF of an 8-bit plane, `F(v) = P(value <= v)`.
pub fn cdf(img: &GrayImage) -> [f64; 256] {
    let c = cumulative(&histogram(img));
    let n = c[255].max(1) as f64;
    let mut out = [0.0; 256];
    for (o, v) in out.iter_mut().zip(c) {
        *o = v as f64 / n;
    }
    out
}
