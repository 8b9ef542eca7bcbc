//! Input preprocessing and augmentation.

mod crop;
mod geometric;
pub mod histogram;
mod photometric;

use std::collections::HashMap;

use image::{GrayImage, Luma, RgbImage};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use crop::{crop_macular, crop_window, CropSpec, CropWindow, MIN_CROP_SIDE};
pub use geometric::{flip_horizontal, geometric_augment, rotate_quarter, AlignedTarget, GeometricTransform};
pub use histogram::{adaptive_equalize, equalize, histogram_match, intensity_rescale};
pub use photometric::{photometric_distort, PhotometricConfig, PhotometricDraw};

/// `255 - green` per pixel.
pub fn invert_green_channel(image: &RgbImage) -> GrayImage {
    GrayImage::from_fn(image.width(), image.height(), |x, y| {
        Luma([255 - image.get_pixel(x, y).0[1]])
    })
}

/// A histogram-processing operation usable for augmentation and test-time variants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum HistogramOp {
    Equalize,
    AdaptiveEqualize { tiles: u32, clip: f64 },
    Rescale { low: f64, high: f64 },
    /// Match against the named canonical image.
    Match { reference: String },
}

impl HistogramOp {
    /// Applies the op channel-wise. `Match` needs its reference in `references`;
    /// a missing reference leaves the image unchanged.
    pub fn apply(&self, img: &RgbImage, references: &HashMap<String, RgbImage>) -> RgbImage {
        match self {
            HistogramOp::Equalize => per_channel(img, None, |p, _| equalize(p)),
            HistogramOp::AdaptiveEqualize { tiles, clip } => {
                per_channel(img, None, |p, _| adaptive_equalize(p, *tiles, *clip))
            }
            HistogramOp::Rescale { low, high } => {
                per_channel(img, None, |p, _| intensity_rescale(p, *low, *high))
            }
            HistogramOp::Match { reference } => match references.get(reference) {
                Some(r) => per_channel(img, Some(r), |p, r| histogram_match(p, r.unwrap())),
                None => img.clone(),
            },
        }
    }

    pub fn name(&self) -> String {
        match self {
            HistogramOp::Equalize => "equalize".into(),
            HistogramOp::AdaptiveEqualize { .. } => "adaptive_equalize".into(),
            HistogramOp::Rescale { low, high } => format!("rescale({low},{high})"),
            HistogramOp::Match { reference } => format!("match({reference})"),
        }
    }
}

fn channel(img: &RgbImage, ch: usize) -> GrayImage {
    GrayImage::from_fn(img.width(), img.height(), |x, y| Luma([img.get_pixel(x, y).0[ch]]))
}

fn per_channel<F>(img: &RgbImage, reference: Option<&RgbImage>, f: F) -> RgbImage
where
    F: Fn(&GrayImage, Option<&GrayImage>) -> GrayImage,
{
    let planes: Vec<GrayImage> = (0..3)
        .map(|ch| {
            let r = reference.map(|r| channel(r, ch));
            f(&channel(img, ch), r.as_ref())
        })
        .collect();
    RgbImage::from_fn(img.width(), img.height(), |x, y| {
        image::Rgb([0, 1, 2].map(|ch| planes[ch].get_pixel(x, y).0[0]))
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentationConfig {
    pub flip_probability: f64,
    /// Bound of the uniform small-angle rotation, degrees.
    pub max_rotation_degrees: f64,
    /// Also draw a random multiple of 90 degrees.
    pub quarter_turns: bool,
    pub photometric: PhotometricConfig,
    /// Probability of applying one histogram op drawn from `histogram_ops`.
    pub histogram_probability: f64,
    pub histogram_ops: Vec<HistogramOp>,
    pub rescale_percentile_pairs: Vec<(f64, f64)>,
    /// Canonical image ids for histogram matching.
    pub match_reference_ids: Vec<String>,
    pub seed: u64,
}

impl Default for AugmentationConfig {
    fn default() -> Self {
        Self {
            flip_probability: 0.5,
            max_rotation_degrees: 20.0,
            quarter_turns: true,
            photometric: PhotometricConfig::default(),
            histogram_probability: 0.5,
            histogram_ops: vec![
                HistogramOp::Equalize,
                HistogramOp::AdaptiveEqualize { tiles: 8, clip: 2.0 },
            ],
            rescale_percentile_pairs: vec![(1.0, 99.0), (2.0, 98.0), (5.0, 95.0)],
            match_reference_ids: Vec::new(),
            seed: 0,
        }
    }
}

impl AugmentationConfig {
    /// No randomness at all; every sample passes through untouched.
    pub fn disabled() -> Self {
        Self {
            flip_probability: 0.0,
            max_rotation_degrees: 0.0,
            quarter_turns: false,
            photometric: PhotometricConfig {
                probability: 0.0,
                ..PhotometricConfig::default()
            },
            histogram_probability: 0.0,
            histogram_ops: Vec::new(),
            rescale_percentile_pairs: Vec::new(),
            match_reference_ids: Vec::new(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        let prob = |name: &str, p: f64, errs: &mut Vec<String>| {
            if !(0.0..=1.0).contains(&p) {
                errs.push(format!("augmentation.{name} = {p} not in [0, 1]"));
            }
        };
        prob("flip_probability", self.flip_probability, &mut errs);
        prob("photometric.probability", self.photometric.probability, &mut errs);
        prob("histogram_probability", self.histogram_probability, &mut errs);
        for &(lo, hi) in &self.rescale_percentile_pairs {
            if !(0.0 <= lo && lo < hi && hi <= 100.0) {
                errs.push(format!("augmentation.rescale_percentile_pairs: ({lo}, {hi}) must satisfy 0 <= low < high <= 100"));
            }
        }
        errs
    }

    /// Every histogram op this config can draw, with rescale pairs and match
    /// references expanded.
    pub fn histogram_pool(&self) -> Vec<HistogramOp> {
        let mut pool = self.histogram_ops.clone();
        pool.extend(
            self.rescale_percentile_pairs
                .iter()
                .map(|&(low, high)| HistogramOp::Rescale { low, high }),
        );
        pool.extend(
            self.match_reference_ids
                .iter()
                .map(|r| HistogramOp::Match { reference: r.clone() }),
        );
        pool
    }
}

/// Per-sample random state derived from the global seed and the sample id, so the
/// draw for one sample does not depend on processing order.
pub fn sample_rng(seed: u64, id: &str, epoch: u64) -> ChaCha8Rng {
    // FNV-1a
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in id.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ h);
    rng.set_stream(epoch);
    rng
}

/// Full training augmentation: photometric and histogram ops on the image only,
/// geometric transform on the image and all targets.
pub fn augment<R: Rng + ?Sized>(
    image: &RgbImage,
    targets: &[AlignedTarget],
    config: &AugmentationConfig,
    references: &HashMap<String, RgbImage>,
    rng: &mut R,
) -> (RgbImage, Vec<AlignedTarget>) {
    let draw = PhotometricDraw::sample(&config.photometric, rng);
    let mut img = photometric_distort(image, &draw);
    let pool = config.histogram_pool();
    if !pool.is_empty() && rng.gen_bool(config.histogram_probability.clamp(0.0, 1.0)) {
        if let Some(op) = pool.choose(rng) {
            img = op.apply(&img, references);
        }
    }
    let (img, targets, _) = geometric_augment(&img, targets, config, rng);
    (img, targets)
}
