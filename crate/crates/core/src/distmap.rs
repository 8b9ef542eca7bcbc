//! Fovea distance-map targets and decoding of predicted maps back to a point.
//!
//! A target is bright at the fovea and fades linearly to zero at a fixed radius;
//! everything further away is background.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data::FoveaCoordinate;
use crate::error::{Error, Result};
use crate::postprocess::{label_components, Connectivity};
use crate::raster::{Mask, Raster};

/// Fraction of pixels kept when thresholding a prediction.
pub const TOP_FRACTION: f64 = 0.01;

/// A `[0, 1]` map; `radius` is set for constructed targets only.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMap {
    pub values: Raster,
    pub radius: Option<f64>,
}

impl DistanceMap {
    pub fn prediction(values: Raster) -> Self {
        Self { values, radius: None }
    }
}

/// How the truncated target is shaped inside the disk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetMode {
    /// `max(0, 1 - d / radius)`.
    #[default]
    Ramp,
    /// Globally normalized and inverted map, zeroed outside the disk.
    GlobalTruncated,
}

/// Exact per-pixel distance to `point`, `sqrt((r - y)^2 + (c - x)^2)`.
pub fn euclidean_distance_field(height: usize, width: usize, point: FoveaCoordinate) -> Raster {
    let dy: Vec<f64> = (0..height).map(|r| (r as f64 - point.y).powi(2)).collect();
    let dx: Vec<f64> = (0..width).map(|c| (c as f64 - point.x).powi(2)).collect();
    Array2::from_shape_fn((height, width), |(r, c)| (dy[r] + dx[c]).sqrt())
}

/// `1 - field / max(field)`. An all-zero field maps to all ones.
pub fn normalize_invert(field: &Raster) -> Raster {
    let max = field.iter().copied().fold(0.0, f64::max);
    if max <= 0.0 {
        return Array2::ones(field.dim());
    }
    field.mapv(|d| 1.0 - d / max)
}

/// Restricts a map to the disk of `radius` around `point`: outside is 0, inside is
/// replaced by the ramp `1 - d / radius`.
pub fn truncate_radius(map: &Raster, point: FoveaCoordinate, radius: f64) -> Result<Raster> {
    if !(radius > 0.0) {
        return Err(Error::InvalidArgument(format!("radius must be positive, got {radius}")));
    }
    let (h, w) = map.dim();
    Ok(euclidean_distance_field(h, w, point).mapv(|d| (1.0 - d / radius).max(0.0)))
}

pub fn build_target(height: usize, width: usize, fovea: FoveaCoordinate, radius: f64) -> Result<DistanceMap> {
    build_target_with(height, width, fovea, radius, TargetMode::Ramp)
}

pub fn build_target_with(
    height: usize,
    width: usize,
    fovea: FoveaCoordinate,
    radius: f64,
    mode: TargetMode,
) -> Result<DistanceMap> {
    if !fovea.within(height, width) {
        return Err(Error::InvalidArgument(format!(
            "fovea ({}, {}) outside {width}x{height} frame",
            fovea.x, fovea.y
        )));
    }
    let field = euclidean_distance_field(height, width, fovea);
    let normalized = normalize_invert(&field);
    let values = match mode {
        TargetMode::Ramp => truncate_radius(&normalized, fovea, radius)?,
        TargetMode::GlobalTruncated => {
            if !(radius > 0.0) {
                return Err(Error::InvalidArgument(format!("radius must be positive, got {radius}")));
            }
            let mut v = normalized;
            v.zip_mut_with(&field, |n, &d| {
                if d >= radius {
                    *n = 0.0
                }
            });
            v
        }
    };
    Ok(DistanceMap {
        values,
        radius: Some(radius),
    })
}

/// Default truncation radius for a frame.
pub fn default_radius(height: usize, width: usize, fraction: f64) -> f64 {
    fraction * height.min(width) as f64
}

struct Cluster {
    labels: ndarray::Array2<u32>,
    chosen: u32,
    min: f64,
}

fn select_cluster(prediction: &Raster) -> Result<Cluster> {
    let n = prediction.len();
    if n == 0 {
        return Err(Error::NoFoveaSignal);
    }
    let (min, max) = prediction
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if !(max > min) {
        return Err(Error::NoFoveaSignal);
    }

    let k = ((TOP_FRACTION * n as f64).ceil() as usize).clamp(1, n);
    let mut sorted: Vec<f64> = prediction.iter().copied().collect();
    sorted.select_nth_unstable_by(n - k, f64::total_cmp);
    let threshold = sorted[n - k];

    let hot = prediction.mapv(|v| v >= threshold);
    let labeling = label_components(&hot, Connectivity::Eight);

    // first maximal pixel in row-major order
    let mut argmax = (0, 0);
    let mut best = f64::NEG_INFINITY;
    for (ix, &v) in prediction.indexed_iter() {
        if v > best {
            best = v;
            argmax = ix;
        }
    }
    let max_label = labeling.labels[argmax];

    let count = labeling.count();
    let mut corner = vec![(usize::MAX, usize::MAX); count];
    for ((r, c), &l) in labeling.labels.indexed_iter() {
        if l > 0 {
            let slot = &mut corner[l as usize - 1];
            slot.0 = slot.0.min(r);
            slot.1 = slot.1.min(c);
        }
    }
    let key = |l: usize| {
        (
            labeling.sizes[l - 1],
            (l as u32 == max_label) as u8,
            std::cmp::Reverse(corner[l - 1]),
        )
    };
    let chosen = (1..=count).max_by_key(|&l| key(l)).ok_or(Error::NoFoveaSignal)? as u32;
    Ok(Cluster {
        labels: labeling.labels,
        chosen,
        min,
    })
}

/// Decodes a predicted map to a point.
///
/// Keeps the top 1% of pixel values, takes the largest 8-connected cluster of them
/// and returns its centroid weighted by `value - min(value)`. Cluster ties go to the
/// cluster holding the global maximum, then to the smallest top-left bounding-box
/// corner in row-major order.
pub fn extract_fovea(prediction: &Raster) -> Result<FoveaCoordinate> {
    let cluster = select_cluster(prediction)?;
    let (mut sw, mut sx, mut sy) = (0.0, 0.0, 0.0);
    let (mut ux, mut uy, mut pixels) = (0.0, 0.0, 0usize);
    for ((r, c), &l) in cluster.labels.indexed_iter() {
        if l == cluster.chosen {
            let wgt = prediction[[r, c]] - cluster.min;
            sw += wgt;
            sx += wgt * c as f64;
            sy += wgt * r as f64;
            ux += c as f64;
            uy += r as f64;
            pixels += 1;
        }
    }
    let (x, y) = if sw > 0.0 {
        (sx / sw, sy / sw)
    } else {
        (ux / pixels as f64, uy / pixels as f64)
    };
    Ok(FoveaCoordinate { x, y })
}

/// Mask of the cluster [`extract_fovea`] takes its centroid over.
pub fn selected_cluster(prediction: &Raster) -> Result<Mask> {
    let cluster = select_cluster(prediction)?;
    Ok(cluster.labels.mapv(|l| l == cluster.chosen))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(x: f64, y: f64) -> FoveaCoordinate {
        FoveaCoordinate { x, y }
    }

    #[test]
    fn field_basics() {
        let f = euclidean_distance_field(10, 10, pt(0.0, 0.0));
        assert_eq!(f[[0, 0]], 0.0);
        assert_eq!(f[[3, 4]], 5.0);
    }

    #[test]
    fn normalize_invert_endpoints() {
        let field = Array2::from_shape_vec((1, 3), vec![0.0, 2.0, 4.0]).unwrap();
        let out = normalize_invert(&field);
        assert_eq!(out.as_slice().unwrap(), &[1.0, 0.5, 0.0]);
        assert!(normalize_invert(&Array2::zeros((1, 1))).iter().all(|&v| v == 1.0));
    }

    #[test]
    fn ramp_values() {
        let base = Array2::zeros((21, 21));
        let t = truncate_radius(&base, pt(10.0, 10.0), 8.0).unwrap();
        assert_eq!(t[[10, 10]], 1.0);
        assert_eq!(t[[10, 18]], 0.0);
        assert_eq!(t[[10, 14]], 0.5);
        assert_eq!(t[[0, 0]], 0.0);
    }

    #[test]
    fn support_is_open_disk() {
        let (h, w, r) = (40, 50, 7.0);
        let f = pt(20.0, 15.0);
        let t = build_target(h, w, f, r).unwrap();
        let inside = (0..h)
            .flat_map(|y| (0..w).map(move |x| (y, x)))
            .filter(|&(y, x)| ((y as f64 - f.y).powi(2) + (x as f64 - f.x).powi(2)) < r * r)
            .count();
        assert_eq!(t.values.iter().filter(|&&v| v > 0.0).count(), inside);
    }

    #[test]
    fn huge_radius_matches_global_normalization() {
        let (h, w) = (30, 40);
        let f = pt(11.0, 7.0);
        let field = euclidean_distance_field(h, w, f);
        let dmax = field.iter().copied().fold(0.0, f64::max);
        let ramp = build_target(h, w, f, dmax).unwrap().values;
        let global = normalize_invert(&field);
        for (a, b) in ramp.iter().zip(global.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn targets_agree_across_frames() {
        let f = pt(12.0, 9.0);
        let a = build_target(32, 32, f, 6.0).unwrap().values;
        let b = build_target(50, 70, f, 6.0).unwrap().values;
        for r in 0..32 {
            for c in 0..32 {
                assert_eq!(a[[r, c]], b[[r, c]]);
            }
        }
    }

    #[test]
    fn outside_fovea_rejected() {
        assert!(build_target(10, 10, pt(10.0, 3.0), 3.0).is_err());
    }

    #[test]
    fn round_trip_fractional_point() {
        let f = pt(100.0, 150.0);
        let t = build_target(256, 256, f, 50.0).unwrap();
        let got = extract_fovea(&t.values).unwrap();
        assert!(got.distance(&f) <= 1.0, "{got:?}");
    }

    #[test]
    fn picks_larger_of_two_blobs() {
        // 200 pixels above threshold in a 10x20 block, 20 in a 4x5 block, on a
        // 150x150 frame (top 1% = 225 pixels)
        let mut p = Array2::zeros((150, 150));
        for r in 10..20 {
            for c in 10..30 {
                p[[r, c]] = 0.8;
            }
        }
        for r in 100..104 {
            for c in 100..105 {
                p[[r, c]] = 0.95;
            }
        }
        // pad the top 1% with the largest background so both blobs are fully hot
        for c in 0..5 {
            p[[149, c]] = 0.5;
        }
        let got = extract_fovea(&p).unwrap();
        assert!((got.x - 19.5).abs() < 1e-9 && (got.y - 14.5).abs() < 1e-9, "{got:?}");
    }

    #[test]
    fn single_nonzero_pixel() {
        let mut p = Array2::zeros((64, 64));
        p[[17, 41]] = 0.3;
        let got = extract_fovea(&p).unwrap();
        assert_eq!((got.x, got.y), (41.0, 17.0));
    }

    #[test]
    fn constant_prediction_errors() {
        assert!(matches!(
            extract_fovea(&Array2::from_elem((8, 8), 0.4)),
            Err(Error::NoFoveaSignal)
        ));
    }

    #[test]
    fn tie_goes_to_cluster_with_global_max() {
        // 28x28 frame -> top 8 pixels; two 2x2 blobs of equal size
        let mut p = Array2::zeros((28, 28));
        for r in 0..2 {
            for c in 0..2 {
                p[[2 + r, 2 + c]] = 0.7;
                p[[20 + r, 20 + c]] = 0.7;
            }
        }
        p[[21, 21]] = 0.9;
        let got = extract_fovea(&p).unwrap();
        assert!(got.y > 20.0 && got.x > 20.0, "{got:?}");
        // equal blobs, no max inside either -> top-left corner wins
        p[[21, 21]] = 0.7;
        p[[27, 27]] = 0.9;
        let cluster = selected_cluster(&p).unwrap();
        assert!(cluster[[2, 2]]);
    }
}
