//! Mask cleanup and area-based detection.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::raster::{foreground_count, Mask, Raster};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Connectivity {
    Four,
    Eight,
}

impl TryFrom<u8> for Connectivity {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, String> {
        match v {
            4 => Ok(Connectivity::Four),
            8 => Ok(Connectivity::Eight),
            _ => Err(format!("connectivity must be 4 or 8, got {v}")),
        }
    }
}

impl From<Connectivity> for u8 {
    fn from(c: Connectivity) -> u8 {
        match c {
            Connectivity::Four => 4,
            Connectivity::Eight => 8,
        }
    }
}

impl Connectivity {
    /// Neighbours already visited in a row-major scan.
    fn backward_offsets(self) -> &'static [(isize, isize)] {
        match self {
            Connectivity::Four => &[(-1, 0), (0, -1)],
            Connectivity::Eight => &[(-1, -1), (-1, 0), (-1, 1), (0, -1)],
        }
    }
}

/// Component labels: `0` is background, components are numbered `1..` in order of
/// their first pixel in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentLabeling {
    pub labels: Array2<u32>,
    /// `sizes[k]` is the pixel count of label `k + 1`.
    pub sizes: Vec<usize>,
    pub connectivity: Connectivity,
}

impl ComponentLabeling {
    pub fn count(&self) -> usize {
        self.sizes.len()
    }

    pub fn component(&self, label: u32) -> Mask {
        self.labels.mapv(|l| l == label)
    }
}

fn find(parent: &mut [u32], mut x: u32) -> u32 {
    while parent[x as usize] != x {
        parent[x as usize] = parent[parent[x as usize] as usize];
        x = parent[x as usize];
    }
    x
}

/// Two-pass union-find labeling.
pub fn label_components(mask: &Mask, connectivity: Connectivity) -> ComponentLabeling {
    let (h, w) = mask.dim();
    let mut provisional = Array2::<u32>::zeros((h, w));
    let mut parent: Vec<u32> = vec![0];
    for r in 0..h {
        for c in 0..w {
            if !mask[[r, c]] {
                continue;
            }
            let mut current = 0u32;
            for &(dr, dc) in connectivity.backward_offsets() {
                let (nr, nc) = (r as isize + dr, c as isize + dc);
                if nr < 0 || nc < 0 || nc >= w as isize {
                    continue;
                }
                let l = provisional[[nr as usize, nc as usize]];
                if l == 0 {
                    continue;
                }
                if current == 0 {
                    current = find(&mut parent, l);
                } else {
                    let (a, b) = (find(&mut parent, current), find(&mut parent, l));
                    if a != b {
                        let (lo, hi) = (a.min(b), a.max(b));
                        parent[hi as usize] = lo;
                        current = lo;
                    }
                }
            }
            if current == 0 {
                current = parent.len() as u32;
                parent.push(current);
            }
            provisional[[r, c]] = current;
        }
    }

    let mut final_label = vec![0u32; parent.len()];
    let mut sizes = Vec::new();
    let mut labels = Array2::<u32>::zeros((h, w));
    for r in 0..h {
        for c in 0..w {
            let p = provisional[[r, c]];
            if p == 0 {
                continue;
            }
            let root = find(&mut parent, p) as usize;
            if final_label[root] == 0 {
                sizes.push(0);
                final_label[root] = sizes.len() as u32;
            }
            let l = final_label[root];
            sizes[l as usize - 1] += 1;
            labels[[r, c]] = l;
        }
    }
    ComponentLabeling {
        labels,
        sizes,
        connectivity,
    }
}

/// Keeps only the biggest component; ties go to the one whose first pixel comes
/// first in row-major order.
pub fn largest_component(mask: &Mask, connectivity: Connectivity) -> Mask {
    let labeling = label_components(mask, connectivity);
    let mut best: Option<(usize, u32)> = None;
    for (i, &s) in labeling.sizes.iter().enumerate() {
        if best.map_or(true, |(bs, _)| s > bs) {
            best = Some((s, i as u32 + 1));
        }
    }
    match best {
        Some((_, label)) => labeling.component(label),
        None => mask.clone(),
    }
}

type Point = (i64, i64);

fn cross(o: Point, a: Point, b: Point) -> i64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Vertices of the convex hull of lattice points, counter-clockwise, collinear points dropped.
pub fn convex_hull(points: &[Point]) -> Vec<Point> {
    let mut pts = points.to_vec();
    pts.sort_unstable();
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<Point> = Vec::with_capacity(2 * pts.len());
    for &p in &pts {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0 {
            hull.pop();
        }
        hull.push(p);
    }
    // the upper chain must not eat into the lower one
    let lower = hull.len() + 1;
    for &p in pts.iter().rev().skip(1) {
        while hull.len() >= lower && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0 {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    hull
}

fn in_hull(hull: &[Point], p: Point) -> bool {
    match hull.len() {
        0 => false,
        1 => hull[0] == p,
        2 => {
            let (a, b) = (hull[0], hull[1]);
            cross(a, b, p) == 0
                && p.0 >= a.0.min(b.0)
                && p.0 <= a.0.max(b.0)
                && p.1 >= a.1.min(b.1)
                && p.1 <= a.1.max(b.1)
        }
        n => (0..n).all(|i| cross(hull[i], hull[(i + 1) % n], p) >= 0),
    }
}

/// Filled convex hull of all foreground pixel centers, boundary inclusive.
pub fn convex_hull_mask(mask: &Mask) -> Mask {
    let points: Vec<Point> = mask
        .indexed_iter()
        .filter(|(_, &v)| v)
        .map(|((r, c), _)| (c as i64, r as i64))
        .collect();
    let hull = convex_hull(&points);
    let mut out = Array2::from_elem(mask.dim(), false);
    if hull.is_empty() {
        return out;
    }
    let (x0, x1) = hull.iter().fold((i64::MAX, i64::MIN), |(lo, hi), p| (lo.min(p.0), hi.max(p.0)));
    let (y0, y1) = hull.iter().fold((i64::MAX, i64::MIN), |(lo, hi), p| (lo.min(p.1), hi.max(p.1)));
    for y in y0..=y1 {
        for x in x0..=x1 {
            if in_hull(&hull, (x, y)) {
                out[[y as usize, x as usize]] = true;
            }
        }
    }
    out
}

/// `(false, empty)` when the foreground area is below `min_area`, else `(true, mask)`.
pub fn detect_by_area(mask: &Mask, min_area: usize) -> (bool, Mask) {
    let area = foreground_count(mask);
    if area == 0 || area < min_area {
        (false, Array2::from_elem(mask.dim(), false))
    } else {
        (true, mask.clone())
    }
}

pub fn binarize(raw: &Raster, threshold: f64) -> Mask {
    raw.mapv(|v| v >= threshold)
}

/// Binarize, keep the largest component, fill its convex hull, then apply the area rule.
pub fn od_postprocess(raw: &Raster, threshold: f64, min_area: usize, connectivity: Connectivity) -> (bool, Mask) {
    let mask = binarize(raw, threshold);
    let mask = largest_component(&mask, connectivity);
    let mask = convex_hull_mask(&mask);
    detect_by_area(&mask, min_area)
}

/// Binarize then apply the area rule.
pub fn lesion_postprocess(raw: &Raster, threshold: f64, min_area: usize) -> (bool, Mask) {
    detect_by_area(&binarize(raw, threshold), min_area)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PostprocessConfig {
    pub binarize_threshold: f64,
    pub connectivity: Connectivity,
    /// Minimum optic-disc area as a fraction of the image.
    pub od_min_area_fraction: f64,
    pub lesion_min_area_fraction: f64,
}

impl Default for PostprocessConfig {
    fn default() -> Self {
        Self {
            binarize_threshold: 0.5,
            connectivity: Connectivity::Eight,
            od_min_area_fraction: 0.0005,
            lesion_min_area_fraction: 0.0002,
        }
    }
}

impl PostprocessConfig {
    pub fn min_area(fraction: f64, height: usize, width: usize) -> usize {
        (fraction * (height * width) as f64).ceil() as usize
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn disk(h: usize, w: usize, cy: f64, cx: f64, r: f64) -> Mask {
        Array2::from_shape_fn((h, w), |(y, x)| {
            (y as f64 - cy).powi(2) + (x as f64 - cx).powi(2) <= r * r
        })
    }

    #[test]
    fn keeps_bigger_blob() {
        let mut m = Array2::from_elem((30, 30), false);
        for r in 2..12 {
            for c in 2..12 {
                m[[r, c]] = true;
            }
        }
        for r in 20..21 {
            for c in 20..25 {
                m[[r, c]] = true;
            }
        }
        let out = largest_component(&m, Connectivity::Eight);
        assert_eq!(foreground_count(&out), 100);
        assert!(!out[[20, 20]]);
    }

    #[test]
    fn empty_and_single_blob() {
        let empty = Array2::from_elem((5, 5), false);
        assert_eq!(largest_component(&empty, Connectivity::Eight), empty);
        assert_eq!(convex_hull_mask(&empty), empty);
        let d = disk(20, 20, 9.0, 9.0, 5.0);
        assert_eq!(largest_component(&d, Connectivity::Four), d);
    }

    #[test]
    fn tie_prefers_first_in_scan_order() {
        let mut m = Array2::from_elem((5, 5), false);
        m[[4, 0]] = true;
        m[[0, 4]] = true;
        let out = largest_component(&m, Connectivity::Eight);
        assert!(out[[0, 4]] && !out[[4, 0]]);
    }

    #[test]
    fn diagonal_pixels_join_only_under_eight() {
        let mut m = Array2::from_elem((3, 3), false);
        m[[0, 0]] = true;
        m[[1, 1]] = true;
        assert_eq!(label_components(&m, Connectivity::Eight).count(), 1);
        assert_eq!(label_components(&m, Connectivity::Four).count(), 2);
    }

    #[test]
    fn hull_fills_l_shape() {
        let mut m = Array2::from_elem((6, 6), false);
        for i in 0..5 {
            m[[i, 0]] = true;
            m[[4, i]] = true;
        }
        let hull = convex_hull_mask(&m);
        // triangle with vertices (0,0), (0,4), (4,4) in (row, col)
        for r in 0..6 {
            for c in 0..6 {
                assert_eq!(hull[[r, c]], r <= 4 && c <= r, "({r},{c})");
            }
        }
    }

    #[test]
    fn digital_disk_is_hull_fixed_point() {
        let d = disk(40, 40, 19.3, 21.7, 11.2);
        assert_eq!(convex_hull_mask(&d), d);
    }

    #[test]
    fn hull_of_single_pixel_and_line() {
        let mut m = Array2::from_elem((7, 7), false);
        m[[3, 3]] = true;
        assert_eq!(convex_hull_mask(&m), m);
        let mut line = Array2::from_elem((7, 7), false);
        line[[0, 0]] = true;
        line[[6, 6]] = true;
        let hull = convex_hull_mask(&line);
        assert_eq!(foreground_count(&hull), 7);
        assert!((0..7).all(|i| hull[[i, i]]));
    }

    #[test]
    fn area_rule() {
        let mut m = Array2::from_elem((20, 20), false);
        for i in 0..50 {
            m[[i / 10, i % 10]] = true;
        }
        assert_eq!(detect_by_area(&m, 100), (false, Array2::from_elem((20, 20), false)));
        for i in 50..100 {
            m[[i / 10, i % 10]] = true;
        }
        assert!(detect_by_area(&m, 100).0);
        assert!(detect_by_area(&m, 0).0);
    }

    #[test]
    fn od_pipeline_keeps_disk_drops_speck() {
        let mut raw = Array2::zeros((48, 48));
        let d = disk(48, 48, 20.0, 20.0, 8.0);
        for ((r, c), &v) in d.indexed_iter() {
            if v {
                raw[[r, c]] = 0.9;
            }
        }
        raw[[42, 42]] = 0.8;
        raw[[42, 43]] = 0.8;
        let (found, mask) = od_postprocess(&raw, 0.5, 10, Connectivity::Eight);
        assert!(found);
        assert_eq!(mask, d);

        let (found, mask) = od_postprocess(&Array2::zeros((8, 8)), 0.5, 1, Connectivity::Eight);
        assert!(!found);
        assert_eq!(foreground_count(&mask), 0);
    }

    #[test]
    fn od_pipeline_fills_concave_bite() {
        let mut raw = Array2::zeros((48, 48));
        let d = disk(48, 48, 24.0, 24.0, 12.0);
        for ((r, c), &v) in d.indexed_iter() {
            if v {
                raw[[r, c]] = 0.95;
            }
        }
        // bite out of the rim
        for r in 20..29 {
            for c in 30..37 {
                raw[[r, c]] = 0.1;
            }
        }
        let (found, mask) = od_postprocess(&raw, 0.5, 10, Connectivity::Eight);
        assert!(found);
        let bitten = binarize(&raw, 0.5);
        assert_eq!(mask, convex_hull_mask(&bitten));
        assert!(mask[[24, 32]]);
    }
}
