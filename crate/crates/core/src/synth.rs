//! Deterministic fundus-like images with exact annotations, for desk-scale runs.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use image::RgbImage;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::{write_manifest, DatasetManifest, FoveaCoordinate, FundusSample, LesionKind, ManifestEntry, Split};
use crate::raster::{save_mask, Mask};
use crate::{Error, Result};

/// Lesion kinds the generator paints. Other kinds are left unannotated.
pub const SYNTH_LESIONS: [LesionKind; 2] = [LesionKind::Drusen, LesionKind::Hemorrhage];

#[derive(Debug, Clone)]
pub struct SynthImage {
    pub id: String,
    pub image: RgbImage,
    pub amd: bool,
    /// Pixel-center disk: `(c - x)^2 + (r - y)^2 <= radius^2`.
    pub od_mask: Mask,
    pub od_center: (f64, f64),
    pub od_radius: f64,
    pub fovea: FoveaCoordinate,
    pub lesions: BTreeMap<LesionKind, Mask>,
}

impl SynthImage {
    pub fn to_sample(&self) -> FundusSample {
        FundusSample {
            id: self.id.clone(),
            image: self.image.clone(),
            amd_label: Some(self.amd),
            od_mask: Some(self.od_mask.clone()),
            fovea: Some(self.fovea),
            lesion_masks: Some(self.lesions.clone()),
        }
    }
}

/// In-memory counterpart of [`cmd_synth`].
pub fn synth_samples(n: usize, resolution: usize, seed: u64) -> Vec<FundusSample> {
    (0..n).map(|i| synth_image(i, resolution, seed).to_sample()).collect()
}

pub fn synth_id(index: usize) -> String {
    format!("synth_{index:04}")
}

fn blend(px: &mut [f64; 3], color: [f64; 3], w: f64) {
    for (p, c) in px.iter_mut().zip(color) {
        *p = *p * (1.0 - w) + c * w;
    }
}

fn paint_disk(weight: &mut Array2<f64>, mask: Option<&mut Mask>, cx: f64, cy: f64, r: f64) {
    let (h, w) = weight.dim();
    let (y0, y1) = (((cy - r - 1.0).floor().max(0.0)) as usize, ((cy + r + 1.0).ceil() as usize).min(h - 1));
    let (x0, x1) = (((cx - r - 1.0).floor().max(0.0)) as usize, ((cx + r + 1.0).ceil() as usize).min(w - 1));
    let mut mask = mask;
    for y in y0..=y1 {
        for x in x0..=x1 {
            let d = (x as f64 - cx).hypot(y as f64 - cy);
            let v = (r + 0.5 - d).clamp(0.0, 1.0);
            weight[[y, x]] = weight[[y, x]].max(v);
            if let Some(m) = mask.as_deref_mut() {
                if d <= r {
                    m[[y, x]] = true;
                }
            }
        }
    }
}

/// Image `index` of a synthetic set. Odd indices carry lesions and `amd = true`.
pub fn synth_image(index: usize, resolution: usize, seed: u64) -> SynthImage {
    let n = resolution as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    let amd = index % 2 == 1;

    let center = n / 2.0;
    let fov_r = 0.47 * n;
    let fx = center + rng.gen_range(-0.2..0.2) * n;
    let fy = center + rng.gen_range(-0.2..0.2) * n;
    let side = if fx < center { 1.0 } else { -1.0 };
    let od_x = fx + side * rng.gen_range(0.22..0.27) * n;
    let od_y = fy + rng.gen_range(-0.03..0.03) * n;
    let od_r = rng.gen_range(0.085..0.105) * n;

    // vessels: arcs leaving the disc above and below, bending toward the macula side
    let mut vessel = Array2::<f64>::zeros((resolution, resolution));
    let width = (0.008 * n).max(0.6);
    for k in 0..6 {
        let up = if k % 2 == 0 { -1.0 } else { 1.0 };
        let spread = rng.gen_range(0.15..0.45) * n;
        let reach = rng.gen_range(0.45..0.7) * n;
        let steps = (reach * 2.0) as usize;
        for s in 0..=steps {
            let t = s as f64 / steps as f64;
            let x = od_x - side * t * reach;
            let y = od_y + up * (spread * t.powf(0.6) * (1.0 - 0.35 * t));
            paint_disk(&mut vessel, None, x, y, width);
        }
    }

    let mut od_weight = Array2::<f64>::zeros((resolution, resolution));
    let mut od_mask = Mask::from_elem((resolution, resolution), false);
    paint_disk(&mut od_weight, Some(&mut od_mask), od_x, od_y, od_r);

    let mut lesions = BTreeMap::new();
    let mut drusen_w = Array2::<f64>::zeros((resolution, resolution));
    let mut hem_w = Array2::<f64>::zeros((resolution, resolution));
    let mut drusen = Mask::from_elem((resolution, resolution), false);
    let mut hem = Mask::from_elem((resolution, resolution), false);
    if amd {
        for _ in 0..rng.gen_range(5..15) {
            let a = rng.gen_range(0.0..std::f64::consts::TAU);
            let d = rng.gen_range(0.02..0.15) * n;
            let r = rng.gen_range(0.008..0.016) * n;
            paint_disk(&mut drusen_w, Some(&mut drusen), fx + d * a.cos(), fy + d * a.sin(), r.max(0.8));
        }
        for _ in 0..rng.gen_range(1..4) {
            let a = rng.gen_range(0.0..std::f64::consts::TAU);
            let d = rng.gen_range(0.0..0.3) * n;
            let r = rng.gen_range(0.01..0.025) * n;
            paint_disk(&mut hem_w, Some(&mut hem), center + d * a.cos(), center + d * a.sin(), r.max(0.8));
        }
    }
    lesions.insert(LesionKind::Drusen, drusen);
    lesions.insert(LesionKind::Hemorrhage, hem);

    let noise = Normal::new(0.0, 3.0).expect("valid");
    let mac_s = 0.07 * n;
    let pit_s = 0.02 * n;
    let image = RgbImage::from_fn(resolution as u32, resolution as u32, |x, y| {
        let (xf, yf) = (x as f64, y as f64);
        let rho = (xf - center).hypot(yf - center);
        let fov = (fov_r + 0.5 - rho).clamp(0.0, 1.0);
        let shade = 1.0 - 0.35 * (rho / fov_r).powi(2);
        let mut px = [190.0 * shade, 90.0 * shade, 45.0 * shade];
        let df2 = (xf - fx).powi(2) + (yf - fy).powi(2);
        let dark = 1.0 - 0.45 * (-df2 / (2.0 * mac_s * mac_s)).exp() - 0.2 * (-df2 / (2.0 * pit_s * pit_s)).exp();
        px.iter_mut().for_each(|p| *p *= dark);
        let (r, c) = (y as usize, x as usize);
        blend(&mut px, [120.0, 30.0, 20.0], 0.8 * vessel[[r, c]]);
        blend(&mut px, [250.0, 225.0, 160.0], od_weight[[r, c]]);
        blend(&mut px, [235.0, 210.0, 120.0], drusen_w[[r, c]]);
        blend(&mut px, [90.0, 15.0, 10.0], hem_w[[r, c]]);
        image::Rgb(px.map(|p| ((p + noise.sample(&mut rng)) * fov).round().clamp(0.0, 255.0) as u8))
    });

    SynthImage {
        id: synth_id(index),
        image,
        amd,
        od_mask,
        od_center: (od_x, od_y),
        od_radius: od_r,
        fovea: FoveaCoordinate { x: fx, y: fy },
        lesions,
    }
}

/// Writes `n` synthetic images with masks and a `manifest.csv` into `out_dir`.
pub fn cmd_synth(n: usize, resolution: usize, seed: u64, out_dir: &Path) -> Result<DatasetManifest> {
    if resolution < 16 {
        return Err(Error::InvalidArgument(format!("synthetic resolution {resolution} is below 16")));
    }
    let dirs = ["images", "od"]
        .into_iter()
        .map(PathBuf::from)
        .chain(SYNTH_LESIONS.iter().map(|k| Path::new("lesions").join(k.name())));
    for d in dirs {
        let p = out_dir.join(d);
        fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
    }
    let mut entries = Vec::with_capacity(n);
    for i in 0..n {
        let s = synth_image(i, resolution, seed);
        let image = PathBuf::from("images").join(format!("{}.png", s.id));
        let p = out_dir.join(&image);
        s.image.save(&p).map_err(|e| Error::image(&p, e))?;
        let od = PathBuf::from("od").join(format!("{}.png", s.id));
        save_mask(&out_dir.join(&od), &s.od_mask)?;
        let mut lesion_masks = BTreeMap::new();
        for (kind, m) in &s.lesions {
            let rel = Path::new("lesions").join(kind.name()).join(format!("{}.png", s.id));
            save_mask(&out_dir.join(&rel), m)?;
            lesion_masks.insert(*kind, rel);
        }
        entries.push(ManifestEntry {
            id: s.id,
            image,
            amd: Some(s.amd),
            od_mask: Some(od),
            fovea: Some(s.fovea),
            lesion_masks,
        });
    }
    let manifest = DatasetManifest::new(entries, Split::Train, out_dir);
    write_manifest(&out_dir.join("manifest.csv"), &manifest)?;
    Ok(manifest)
}
