use std::fmt;
use std::str::FromStr;

use image::RgbImage;
use ndarray::{s, Array2, Array3};
use serde::{Deserialize, Serialize};

use crate::data::{DatasetManifest, FoveaCoordinate, FundusSample, LesionKind};
use crate::distmap::{build_target_with, default_radius, TargetMode};
use crate::nn::Tensor;
use crate::preprocess::{augment, invert_green_channel, sample_rng, AlignedTarget, AugmentationConfig};
use crate::raster::{resize_bilinear, resize_nearest, rgb_from_planes, rgb_planes, Mask, Raster};
use crate::{Error, Result};

/// What a generator is trained to produce.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum GanTask {
    /// Optic-disc mask from the inverted green channel.
    OdSeg,
    /// Fovea distance map from the color image.
    Fovea,
    Lesion(LesionKind),
}

impl GanTask {
    pub fn input_channels(self) -> usize {
        match self {
            GanTask::OdSeg => 1,
            _ => 3,
        }
    }

    pub fn is_segmentation(self) -> bool {
        !matches!(self, GanTask::Fovea)
    }
}

impl fmt::Display for GanTask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GanTask::OdSeg => f.write_str("od"),
            GanTask::Fovea => f.write_str("fovea"),
            GanTask::Lesion(k) => write!(f, "lesion:{k}"),
        }
    }
}

impl FromStr for GanTask {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "od" => Ok(GanTask::OdSeg),
            "fovea" => Ok(GanTask::Fovea),
            _ => match s.strip_prefix("lesion:") {
                Some(k) => Ok(GanTask::Lesion(k.parse()?)),
                None => Err(Error::InvalidArgument(format!(
                    "unknown task `{s}` (expected od, fovea or lesion:<kind>)"
                ))),
            },
        }
    }
}

impl TryFrom<String> for GanTask {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<GanTask> for String {
    fn from(t: GanTask) -> String {
        t.to_string()
    }
}

/// Aspect-preserving fit of an `h x w` frame into a `height x width` canvas,
/// centered, padded with zeros.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Letterbox {
    pub source: (usize, usize),
    pub canvas: (usize, usize),
    pub content: (usize, usize),
    pub offset: (usize, usize),
}

impl Letterbox {
    pub fn new(source: (usize, usize), canvas: (usize, usize)) -> Self {
        let (h, w) = source;
        let (ch, cw) = canvas;
        let scale = (ch as f64 / h as f64).min(cw as f64 / w as f64);
        let content = (
            ((h as f64 * scale).round() as usize).clamp(1, ch),
            ((w as f64 * scale).round() as usize).clamp(1, cw),
        );
        Self {
            source,
            canvas,
            content,
            offset: ((ch - content.0) / 2, (cw - content.1) / 2),
        }
    }

    fn place<T: Clone + Default>(&self, content: Array2<T>) -> Array2<T> {
        let mut out = Array2::from_elem(self.canvas, T::default());
        let (oy, ox) = self.offset;
        out.slice_mut(s![oy..oy + self.content.0, ox..ox + self.content.1]).assign(&content);
        out
    }

    pub fn apply_raster(&self, src: &Raster) -> Raster {
        self.place(resize_bilinear(src, self.content.0, self.content.1))
    }

    pub fn apply_mask(&self, src: &Mask) -> Mask {
        self.place(resize_nearest(src, self.content.0, self.content.1))
    }

    pub fn apply_image(&self, img: &RgbImage) -> RgbImage {
        rgb_from_planes(&rgb_planes(img).map(|p| self.apply_raster(&p)))
    }

    /// Pixel-center aligned coordinate map into the canvas, kept inside the
    /// content region.
    pub fn apply_point(&self, p: FoveaCoordinate) -> FoveaCoordinate {
        let sy = self.content.0 as f64 / self.source.0 as f64;
        let sx = self.content.1 as f64 / self.source.1 as f64;
        let (oy, ox) = (self.offset.0 as f64, self.offset.1 as f64);
        FoveaCoordinate {
            x: ((p.x + 0.5) * sx - 0.5 + ox).clamp(ox, ox + (self.content.1 - 1) as f64),
            y: ((p.y + 0.5) * sy - 0.5 + oy).clamp(oy, oy + (self.content.0 - 1) as f64),
        }
    }

    pub fn invert_point(&self, p: FoveaCoordinate) -> FoveaCoordinate {
        let sy = self.source.0 as f64 / self.content.0 as f64;
        let sx = self.source.1 as f64 / self.content.1 as f64;
        FoveaCoordinate {
            x: (p.x - self.offset.1 as f64 + 0.5) * sx - 0.5,
            y: (p.y - self.offset.0 as f64 + 0.5) * sy - 0.5,
        }
    }

    /// Crops the content region of a canvas raster and resamples it to the source size.
    pub fn invert_raster(&self, canvas: &Raster) -> Raster {
        let (oy, ox) = self.offset;
        let inner = canvas.slice(s![oy..oy + self.content.0, ox..ox + self.content.1]).to_owned();
        resize_bilinear(&inner, self.source.0, self.source.1)
    }
}

/// One training pair before augmentation, at model resolution.
#[derive(Debug, Clone)]
pub struct GanSample {
    pub id: String,
    pub image: RgbImage,
    pub target: AlignedTarget,
}

/// Brings a sample to `resolution` and picks the task's target. `None` when the
/// sample carries no annotation for the task. A missing mask for one lesion kind
/// in an otherwise lesion-annotated sample means that lesion is absent.
pub fn prepare_sample(task: GanTask, sample: &FundusSample, resolution: (usize, usize)) -> Option<GanSample> {
    let lb = Letterbox::new((sample.height(), sample.width()), resolution);
    let target = match task {
        GanTask::OdSeg => AlignedTarget::Mask(lb.apply_mask(sample.od_mask.as_ref()?)),
        GanTask::Fovea => AlignedTarget::Point(lb.apply_point(sample.fovea?)),
        GanTask::Lesion(kind) => {
            let masks = sample.lesion_masks.as_ref()?;
            match masks.get(&kind) {
                Some(m) => AlignedTarget::Mask(lb.apply_mask(m)),
                None => AlignedTarget::Mask(Mask::from_elem(resolution, false)),
            }
        }
    };
    Some(GanSample {
        id: sample.id.clone(),
        image: lb.apply_image(&sample.image),
        target,
    })
}

/// Loads every manifest entry annotated for `task`.
pub fn prepare_manifest(task: GanTask, manifest: &DatasetManifest, resolution: (usize, usize)) -> Result<Vec<GanSample>> {
    let mut out = Vec::new();
    for e in &manifest.entries {
        let s = manifest.load_sample(e)?;
        if let Some(mut g) = prepare_sample(task, &s, resolution) {
            g.id = e.id.clone();
            out.push(g);
        }
    }
    Ok(out)
}

/// Network input planes scaled to `[-1, 1]`.
pub fn input_planes(task: GanTask, image: &RgbImage) -> Array3<f32> {
    let (w, h) = image.dimensions();
    let (h, w) = (h as usize, w as usize);
    match task {
        GanTask::OdSeg => {
            let g = invert_green_channel(image);
            Array3::from_shape_fn((1, h, w), |(_, r, c)| g.get_pixel(c as u32, r as u32).0[0] as f32 / 127.5 - 1.0)
        }
        _ => Array3::from_shape_fn((3, h, w), |(ch, r, c)| {
            image.get_pixel(c as u32, r as u32).0[ch] as f32 / 127.5 - 1.0
        }),
    }
}

/// How targets are rendered to tanh range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TargetSpec {
    /// Distance-map radius as a fraction of `min(H, W)`.
    pub radius_fraction: f64,
    pub mode: TargetMode,
}

impl Default for TargetSpec {
    fn default() -> Self {
        Self {
            radius_fraction: 0.15,
            mode: TargetMode::Ramp,
        }
    }
}

/// Target raster in `[-1, 1]`: masks to `{-1, +1}`, distance maps to `2v - 1`.
pub fn target_plane(target: &AlignedTarget, size: (usize, usize), spec: &TargetSpec) -> Result<Array2<f32>> {
    match target {
        AlignedTarget::Mask(m) => Ok(m.mapv(|v| if v { 1.0 } else { -1.0 })),
        AlignedTarget::Map(m) => Ok(m.mapv(|v| (2.0 * v - 1.0) as f32)),
        AlignedTarget::Point(p) => {
            let radius = default_radius(size.0, size.1, spec.radius_fraction);
            let map = build_target_with(size.0, size.1, *p, radius, spec.mode)?;
            Ok(map.values.mapv(|v| (2.0 * v - 1.0) as f32))
        }
    }
}

/// Augments (per-sample stream keyed by id and epoch) and stacks a batch.
pub fn make_batch(
    task: GanTask,
    samples: &[&GanSample],
    augmentation: &AugmentationConfig,
    target_spec: &TargetSpec,
    epoch: u64,
) -> Result<(Tensor<f32>, Tensor<f32>)> {
    let refs = Default::default();
    let mut inputs = Vec::with_capacity(samples.len());
    let mut targets = Vec::with_capacity(samples.len());
    for s in samples {
        let mut rng = sample_rng(augmentation.seed, &s.id, epoch);
        let (img, t) = augment(&s.image, std::slice::from_ref(&s.target), augmentation, &refs, &mut rng);
        let (w, h) = s.image.dimensions();
        let size = (h as usize, w as usize);
        let usable = img.dimensions() == (w, h)
            && !matches!(&t[0], AlignedTarget::Point(p) if !p.within(size.0, size.1));
        // a quarter turn of a non-square canvas, or a fovea rotated out of frame,
        // falls back to the untouched pair
        let (img, target) = if usable { (&img, &t[0]) } else { (&s.image, &s.target) };
        inputs.push(input_planes(task, img));
        targets.push(target_plane(target, size, target_spec)?);
    }
    let stack3 = |v: Vec<Array3<f32>>| {
        let views: Vec<_> = v.iter().map(|a| a.view().insert_axis(ndarray::Axis(0))).collect();
        ndarray::concatenate(ndarray::Axis(0), &views).expect("uniform sizes")
    };
    let targets: Vec<Array3<f32>> = targets.into_iter().map(|t| t.insert_axis(ndarray::Axis(0))).collect();
    Ok((stack3(inputs), stack3(targets)))
}
