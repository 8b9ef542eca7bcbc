use std::path::Path;

use image::RgbImage;
use ndarray::{s, Axis};

use super::data::{input_planes, GanTask, Letterbox};
use super::net::Generator;
use super::train::Checkpoint;
use crate::raster::Raster;
use crate::Result;

/// A loaded generator. `predict` takes `&self`, so one model can serve
/// concurrent callers.
pub struct GanModel {
    checkpoint: Checkpoint,
    generator: Generator<f32>,
}

impl GanModel {
    pub fn load(dir: &Path) -> Result<Self> {
        Self::from_checkpoint(Checkpoint::load(dir)?)
    }

    pub fn from_checkpoint(checkpoint: Checkpoint) -> Result<Self> {
        let generator = checkpoint.build_generator()?;
        Ok(Self { checkpoint, generator })
    }

    pub fn task(&self) -> GanTask {
        self.checkpoint.config.task
    }

    pub fn checkpoint(&self) -> &Checkpoint {
        &self.checkpoint
    }

    pub fn resolution(&self) -> (usize, usize) {
        self.checkpoint.config.train.resolution
    }

    /// `(G(x) + 1) / 2` at model resolution for an image already letterboxed to it.
    pub fn predict_canvas(&self, canvas: &RgbImage) -> Result<Raster> {
        let x = input_planes(self.task(), canvas).insert_axis(Axis(0));
        let y = self.generator.eval(&x)?;
        Ok(y.slice(s![0, 0, .., ..]).mapv(|v| ((v as f64 + 1.0) / 2.0).clamp(0.0, 1.0)))
    }

    /// Letterboxes to model resolution, runs the generator and maps the `[0, 1]`
    /// output back to the image's own geometry.
    pub fn predict(&self, image: &RgbImage) -> Result<Raster> {
        let (w, h) = image.dimensions();
        let lb = Letterbox::new((h as usize, w as usize), self.resolution());
        let canvas = self.predict_canvas(&lb.apply_image(image))?;
        Ok(lb.invert_raster(&canvas))
    }
}

/// One-shot inference from a checkpoint directory.
pub fn infer(checkpoint_dir: &Path, image: &RgbImage) -> Result<Raster> {
    GanModel::load(checkpoint_dir)?.predict(image)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gan::{GanConfig, GanTrainer};

    #[test]
    fn output_in_unit_range_deterministic_and_in_source_geometry() {
        let mut c = GanConfig::for_task(GanTask::OdSeg);
        c.generator.base_width = 2;
        c.generator.n_special_blocks = 1;
        c.train.resolution = (16, 16);
        c.train.init.std = 0.5;
        let t = GanTrainer::new(c).unwrap();
        let model = GanModel::from_checkpoint(t.checkpoint(0.0, "")).unwrap();
        let img = RgbImage::from_fn(30, 18, |x, y| image::Rgb([x as u8 * 8, y as u8 * 14, 7]));
        let a = model.predict(&img).unwrap();
        assert_eq!(a.dim(), (18, 30));
        assert!(a.iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(a, model.predict(&img).unwrap());
    }

    #[test]
    fn missing_checkpoint_fails() {
        let dir = tempfile::tempdir().unwrap();
        assert!(infer(dir.path(), &RgbImage::new(8, 8)).is_err());
    }
}
