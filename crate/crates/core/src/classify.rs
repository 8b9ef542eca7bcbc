//! AMD probability: pluggable backbones, training with best-accuracy
//! selection, histogram test-time augmentation and ensembling.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use image::imageops::FilterType;
use image::RgbImage;
use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{DatasetManifest, FoveaCoordinate};
use crate::gan::sigmoid;
use crate::nn::{
    init_weights, read_state, write_atomic, write_state, BatchNorm2d, Conv2d, GlobalAvgPool, Linear, Module, Optimizer,
    OptimizerKind, Param, Relu, StateDict, Tensor,
};
use crate::preprocess::{augment, crop_window, sample_rng, AugmentationConfig, HistogramOp};
use crate::{Error, Result};

pub const CLASSIFIER_FILE: &str = "classifier.bin";
pub const TOY_BACKBONE: &str = "toy_cnn";
/// Architectures that need external adapters (weights are not bundled).
pub const ADAPTER_BACKBONES: [&str; 7] = [
    "efficientnet_b4",
    "efficientnet_b5",
    "efficientnet_b6",
    "efficientnet_b7",
    "inception_resnet_v2",
    "resnext101_wsl",
    "se_resnext50",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierOptimizer {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackboneSpec {
    pub name: String,
    pub input_resolution: (usize, usize),
    pub optimizer: ClassifierOptimizer,
    /// Classifier checkpoint directory whose weights initialize training.
    pub pretrained_source: Option<PathBuf>,
    /// Channel width of the first toy layer; doubles per layer.
    pub width: usize,
}

impl Default for BackboneSpec {
    fn default() -> Self {
        Self {
            name: TOY_BACKBONE.into(),
            input_resolution: (64, 64),
            optimizer: ClassifierOptimizer::Adam,
            pretrained_source: None,
            width: 8,
        }
    }
}

impl BackboneSpec {
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        let (h, w) = self.input_resolution;
        if h < 32 || w < 32 {
            errs.push(format!("backbone.input_resolution {h}x{w}: both sides must be at least 32"));
        }
        if self.name != TOY_BACKBONE {
            if ADAPTER_BACKBONES.contains(&self.name.as_str()) {
                errs.push(format!("backbone `{}` needs an external adapter, not available in this build", self.name));
            } else {
                errs.push(format!("unknown backbone `{}`", self.name));
            }
        }
        if self.width == 0 {
            errs.push("backbone.width must be positive".into());
        }
        errs
    }
}

/// Image-to-logit network behind a uniform interface.
pub trait Backbone: Module<f32> + Send + Sync {
    fn spec(&self) -> &BackboneSpec;
    /// One logit per batch item.
    fn forward(&mut self, x: &Tensor<f32>, train: bool) -> Array1<f32>;
    fn eval(&self, x: &Tensor<f32>) -> Array1<f32>;
    fn backward(&mut self, dlogits: &Array1<f32>);
}

/// Three strided conv-BN-ReLU layers, global average pooling and an affine head.
pub struct ToyCnn {
    spec: BackboneSpec,
    convs: Vec<(Conv2d<f32>, BatchNorm2d<f32>, Relu)>,
    pool: GlobalAvgPool,
    head: Linear<f32>,
}

impl ToyCnn {
    pub fn new(spec: &BackboneSpec) -> Self {
        let mut convs = Vec::new();
        let mut cin = 3;
        for i in 0..3 {
            let cout = spec.width << i;
            convs.push((
                Conv2d::new(&format!("conv{i}"), cin, cout, 3, 2, 1, false),
                BatchNorm2d::new(&format!("norm{i}"), cout),
                Relu::new(),
            ));
            cin = cout;
        }
        Self {
            spec: spec.clone(),
            convs,
            pool: GlobalAvgPool::new(),
            head: Linear::new("head", cin, 1),
        }
    }
}

impl Module<f32> for ToyCnn {
    fn visit(&self, f: &mut dyn FnMut(&Param<f32>)) {
        for (c, n, _) in &self.convs {
            c.visit(f);
            n.visit(f);
        }
        self.head.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param<f32>)) {
        for (c, n, _) in &mut self.convs {
            c.visit_mut(f);
            n.visit_mut(f);
        }
        self.head.visit_mut(f);
    }
}

impl Backbone for ToyCnn {
    fn spec(&self) -> &BackboneSpec {
        &self.spec
    }

    fn forward(&mut self, x: &Tensor<f32>, train: bool) -> Array1<f32> {
        let mut h = x.clone();
        for (c, n, r) in &mut self.convs {
            h = r.forward(&n.forward(&c.forward(&h, train), train), train);
        }
        let p = self.pool.forward(&h);
        self.head.forward(&p, train).index_axis_move(Axis(1), 0)
    }

    fn eval(&self, x: &Tensor<f32>) -> Array1<f32> {
        let mut h = x.clone();
        for (c, n, _) in &self.convs {
            h = Relu::eval(&n.eval(&c.eval(&h)));
        }
        self.head.eval(&GlobalAvgPool::eval(&h)).index_axis_move(Axis(1), 0)
    }

    fn backward(&mut self, dlogits: &Array1<f32>) {
        let dy: Array2<f32> = dlogits.clone().insert_axis(Axis(1));
        let mut d = self.pool.backward(&self.head.backward(&dy));
        for (i, (c, n, r)) in self.convs.iter_mut().enumerate().rev() {
            let dn = n.backward(&r.backward(&d));
            match c.backward(&dn, i > 0) {
                Some(dx) => d = dx,
                None => break,
            }
        }
    }
}

pub fn build_backbone(spec: &BackboneSpec) -> Result<Box<dyn Backbone>> {
    let errs = spec.validate();
    if !errs.is_empty() {
        return Err(Error::Config(errs));
    }
    Ok(Box::new(ToyCnn::new(spec)))
}

/// Resizes each image to `resolution` and stacks them scaled to `[-1, 1]`.
pub fn image_batch(images: &[&RgbImage], resolution: (usize, usize)) -> Tensor<f32> {
    let (h, w) = resolution;
    let mut t = Tensor::zeros((images.len(), 3, h, w));
    for (i, img) in images.iter().enumerate() {
        let resized;
        let img = if img.dimensions() == (w as u32, h as u32) {
            *img
        } else {
            resized = image::imageops::resize(*img, w as u32, h as u32, FilterType::Triangle);
            &resized
        };
        for (x, y, px) in img.enumerate_pixels() {
            for c in 0..3 {
                t[[i, c, y as usize, x as usize]] = px.0[c] as f32 / 127.5 - 1.0;
            }
        }
    }
    t
}

/// Mean binary cross-entropy on logits and its gradient.
pub fn bce_with_logits(logits: &Array1<f32>, labels: &[bool]) -> (f64, Array1<f32>) {
    let n = logits.len().max(1) as f64;
    let mut loss = 0.0;
    let grad = logits
        .iter()
        .zip(labels)
        .map(|(&z, &y)| {
            let z = z as f64;
            let t = y as u8 as f64;
            // log(1 + e^z) - t z, stable on both sides
            loss += z.max(0.0) - z * t + (-z.abs()).exp().ln_1p();
            ((sigmoid(z) - t) / n) as f32
        })
        .collect();
    (loss / n, grad)
}

#[derive(Debug, Clone)]
pub struct ClassifierSample {
    pub id: String,
    pub image: RgbImage,
    pub label: bool,
}

/// Labeled entries cropped around the fovea (image center if unannotated) at `zoom`.
pub fn classifier_samples(manifest: &DatasetManifest, zoom: f64) -> Result<Vec<ClassifierSample>> {
    let mut out = Vec::new();
    for e in &manifest.entries {
        let Some(label) = e.amd else { continue };
        let s = manifest.load_sample(e)?;
        out.push(ClassifierSample {
            id: e.id.clone(),
            image: macular_crop(&s.image, s.fovea, zoom)?,
            label,
        });
    }
    Ok(out)
}

pub fn macular_crop(image: &RgbImage, fovea: Option<FoveaCoordinate>, zoom: f64) -> Result<RgbImage> {
    let w = crop_window(image.width(), image.height(), fovea, zoom)?;
    Ok(image::imageops::crop_imm(image, w.left, w.top, w.side, w.side).to_image())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Momentum for the SGD optimizer.
    pub momentum: f64,
    pub init_std: f64,
    pub seed: u64,
    pub augmentation: AugmentationConfig,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            learning_rate: 1e-3,
            batch_size: 8,
            momentum: 0.9,
            init_std: 0.05,
            seed: 0,
            augmentation: AugmentationConfig::default(),
        }
    }
}

impl ClassifierConfig {
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if !(self.learning_rate > 0.0) {
            errs.push(format!("classifier.learning_rate = {} must be positive", self.learning_rate));
        }
        if self.batch_size == 0 {
            errs.push("classifier.batch_size must be positive".into());
        }
        if !(self.init_std >= 0.0) {
            errs.push(format!("classifier.init_std = {} must be non-negative", self.init_std));
        }
        errs.extend(self.augmentation.validate());
        errs
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierEpoch {
    pub epoch: usize,
    pub loss: f64,
    pub accuracy: f64,
}

/// Best-accuracy weights with the spec to rebuild them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassifierCheckpoint {
    pub spec: BackboneSpec,
    pub weights: StateDict<f32>,
    /// Completed epochs when these weights were taken; 0 is the initialization.
    pub epoch: usize,
    pub accuracy: f64,
    pub history: Vec<ClassifierEpoch>,
}

impl ClassifierCheckpoint {
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut bytes = Vec::new();
        write_state(&mut bytes, self)?;
        write_atomic(&dir.join(CLASSIFIER_FILE), &bytes)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(CLASSIFIER_FILE);
        let bytes = fs::read(&path).map_err(|e| Error::Checkpoint {
            path: path.clone(),
            message: e.to_string(),
        })?;
        read_state(bytes.as_slice()).map_err(|e| match e {
            Error::Checkpoint { message, .. } => Error::Checkpoint { path, message },
            e => e,
        })
    }
}

/// Accuracy at threshold 0.5.
pub fn accuracy(model: &dyn Backbone, samples: &[ClassifierSample]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let res = model.spec().input_resolution;
    let mut correct = 0;
    for chunk in samples.chunks(16) {
        let imgs: Vec<&RgbImage> = chunk.iter().map(|s| &s.image).collect();
        let logits = model.eval(&image_batch(&imgs, res));
        correct += logits.iter().zip(chunk).filter(|(&z, s)| (z >= 0.0) == s.label).count();
    }
    correct as f64 / samples.len() as f64
}

/// Trains `backbone` for `config.epochs`, keeping the weights with the highest
/// validation accuracy (training accuracy when `val` is empty); ties go to the
/// later epoch.
pub fn train_classifier(
    backbone: &BackboneSpec,
    config: &ClassifierConfig,
    train: &[ClassifierSample],
    val: &[ClassifierSample],
) -> Result<ClassifierCheckpoint> {
    let mut errs = backbone.validate();
    errs.extend(config.validate());
    if !errs.is_empty() {
        return Err(Error::Config(errs));
    }
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if train.iter().all(|s| s.label) || train.iter().all(|s| !s.label) {
        return Err(Error::SingleClass);
    }
    let mut model = build_backbone(backbone)?;
    init_weights(model.as_mut(), 0.0, config.init_std, config.seed);
    if let Some(src) = &backbone.pretrained_source {
        let ck = ClassifierCheckpoint::load(src)?;
        model.load_state_dict(&ck.weights).map_err(|e| Error::Checkpoint {
            path: src.clone(),
            message: format!("pretrained weights: {e}"),
        })?;
    }
    let kind = match backbone.optimizer {
        ClassifierOptimizer::Adam => OptimizerKind::adam(0.9, 0.999),
        ClassifierOptimizer::Sgd => OptimizerKind::Sgd {
            momentum: config.momentum,
        },
    };
    let mut opt = Optimizer::new(kind, config.learning_rate);
    let scored = if val.is_empty() { train } else { val };
    let mut best = ClassifierCheckpoint {
        spec: backbone.clone(),
        weights: model.state_dict(),
        epoch: 0,
        accuracy: accuracy(model.as_ref(), scored),
        history: Vec::new(),
    };
    let mut history = Vec::new();
    let references = HashMap::new();
    let res = backbone.input_resolution;
    for epoch in 1..=config.epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(epoch as u64);
        order.shuffle(&mut rng);
        let (mut loss_sum, mut batches) = (0.0, 0);
        for chunk in order.chunks(config.batch_size) {
            let imgs: Vec<RgbImage> = chunk
                .iter()
                .map(|&i| {
                    let s = &train[i];
                    let mut rng = sample_rng(config.augmentation.seed ^ config.seed, &s.id, epoch as u64);
                    augment(&s.image, &[], &config.augmentation, &references, &mut rng).0
                })
                .collect();
            let labels: Vec<bool> = chunk.iter().map(|&i| train[i].label).collect();
            let x = image_batch(&imgs.iter().collect::<Vec<_>>(), res);
            model.zero_grad();
            let logits = model.forward(&x, true);
            let (loss, grad) = bce_with_logits(&logits, &labels);
            if !loss.is_finite() {
                return Err(Error::NonFinite {
                    epoch,
                    step: batches,
                    detail: format!("classifier loss {loss}"),
                });
            }
            model.backward(&grad);
            opt.step(model.as_mut());
            loss_sum += loss;
            batches += 1;
        }
        let acc = accuracy(model.as_ref(), scored);
        log::info!("classifier epoch {epoch}: loss {:.4} accuracy {acc:.4}", loss_sum / batches as f64);
        history.push(ClassifierEpoch {
            epoch,
            loss: loss_sum / batches as f64,
            accuracy: acc,
        });
        if acc >= best.accuracy {
            best.weights = model.state_dict();
            best.epoch = epoch;
            best.accuracy = acc;
        }
    }
    best.history = history;
    Ok(best)
}

/// A loaded classifier.
pub struct Classifier {
    backbone: Box<dyn Backbone>,
}

impl Classifier {
    pub fn from_checkpoint(ck: &ClassifierCheckpoint) -> Result<Self> {
        let mut backbone = build_backbone(&ck.spec)?;
        backbone.load_state_dict(&ck.weights)?;
        Ok(Self { backbone })
    }

    pub fn load(dir: &Path) -> Result<Self> {
        Self::from_checkpoint(&ClassifierCheckpoint::load(dir)?)
    }

    pub fn spec(&self) -> &BackboneSpec {
        self.backbone.spec()
    }

    /// Sigmoid output for each image, one forward pass per image.
    pub fn probabilities(&self, images: &[&RgbImage]) -> Vec<f64> {
        images
            .iter()
            .map(|img| {
                let z = self.backbone.eval(&image_batch(&[img], self.spec().input_resolution))[0];
                sigmoid(z as f64)
            })
            .collect()
    }

    pub fn probability(&self, image: &RgbImage) -> f64 {
        self.probabilities(&[image])[0]
    }
}

/// Default histogram variants added to the identity pass.
pub fn default_tta_ops() -> Vec<HistogramOp> {
    vec![
        HistogramOp::Equalize,
        HistogramOp::AdaptiveEqualize { tiles: 8, clip: 2.0 },
        HistogramOp::Rescale { low: 2.0, high: 98.0 },
    ]
}

/// Mean of `score` over the image and each histogram variant of it.
pub fn tta_mean(image: &RgbImage, ops: &[HistogramOp], references: &HashMap<String, RgbImage>, score: impl Fn(&RgbImage) -> f64) -> f64 {
    let mut values = vec![score(image)];
    values.extend(ops.iter().map(|op| score(&op.apply(image, references))));
    mean_probability(&values)
}

pub fn tta_predict(model: &Classifier, image: &RgbImage, ops: &[HistogramOp], references: &HashMap<String, RgbImage>) -> f64 {
    tta_mean(image, ops, references, |img| model.probability(img))
}

/// Correctly rounded sum (Shewchuk partials with a final half-way fix), so the
/// result does not depend on the order of `values`.
pub fn exact_sum(values: &[f64]) -> f64 {
    let mut partials: Vec<f64> = Vec::new();
    for &v in values {
        let mut x = v;
        let mut i = 0;
        for j in 0..partials.len() {
            let mut y = partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                partials[i] = lo;
                i += 1;
            }
            x = hi;
        }
        partials.truncate(i);
        partials.push(x);
    }
    let Some(mut hi) = partials.pop() else { return 0.0 };
    let mut lo = 0.0;
    while let Some(y) = partials.pop() {
        let x = hi;
        hi = x + y;
        lo = y - (hi - x);
        if lo != 0.0 {
            break;
        }
    }
    if let Some(&next) = partials.last() {
        if (lo < 0.0 && next < 0.0) || (lo > 0.0 && next > 0.0) {
            let y = lo * 2.0;
            let x = hi + y;
            if y == x - hi {
                hi = x;
            }
        }
    }
    hi
}

/// Unweighted mean via [`exact_sum`].
pub fn mean_probability(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    exact_sum(values) / values.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleMember {
    pub name: String,
    /// Macular crop side as a fraction of `min(H, W)`.
    pub zoom: f64,
    pub checkpoint: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub members: Vec<EnsembleMember>,
    #[serde(default = "default_tta_ops")]
    pub tta_ops: Vec<HistogramOp>,
}

impl EnsembleSpec {
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if self.members.is_empty() {
            errs.push("ensemble.members must not be empty".into());
        }
        for m in &self.members {
            if !(m.zoom > 0.0 && m.zoom <= 1.0) {
                errs.push(format!("ensemble member `{}`: zoom {} not in (0, 1]", m.name, m.zoom));
            }
        }
        errs
    }
}

pub struct Ensemble {
    spec: EnsembleSpec,
    members: Vec<Classifier>,
}

impl Ensemble {
    /// Loads every member; the first failure aborts, naming its member.
    pub fn load(spec: &EnsembleSpec) -> Result<Self> {
        let errs = spec.validate();
        if !errs.is_empty() {
            return Err(Error::Config(errs));
        }
        let members = spec
            .members
            .iter()
            .map(|m| {
                Classifier::load(&m.checkpoint).map_err(|e| Error::Member {
                    member: m.name.clone(),
                    source: Box::new(e),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            spec: spec.clone(),
            members,
        })
    }

    pub fn spec(&self) -> &EnsembleSpec {
        &self.spec
    }

    /// Each member's TTA probability on its own macular crop, in member order.
    pub fn member_probabilities(
        &self,
        image: &RgbImage,
        fovea: Option<FoveaCoordinate>,
        references: &HashMap<String, RgbImage>,
    ) -> Result<Vec<f64>> {
        self.spec
            .members
            .par_iter()
            .zip(self.members.par_iter())
            .map(|(m, model)| {
                let crop = macular_crop(image, fovea, m.zoom).map_err(|e| Error::Member {
                    member: m.name.clone(),
                    source: Box::new(e),
                })?;
                Ok(tta_predict(model, &crop, &self.spec.tta_ops, references))
            })
            .collect()
    }

    pub fn predict(&self, image: &RgbImage, fovea: Option<FoveaCoordinate>, references: &HashMap<String, RgbImage>) -> Result<f64> {
        Ok(mean_probability(&self.member_probabilities(image, fovea, references)?))
    }
}

pub fn ensemble_predict(spec: &EnsembleSpec, image: &RgbImage, fovea: Option<FoveaCoordinate>) -> Result<f64> {
    Ensemble::load(spec)?.predict(image, fovea, &HashMap::new())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::flat_values;
    use proptest::prelude::*;
    use rand::Rng;

    /// Bright versus dark noisy squares.
    fn separable(n: usize, seed: u64) -> Vec<ClassifierSample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let label = i % 2 == 0;
                let base = if label { 170.0 } else { 80.0 };
                let image = RgbImage::from_fn(40, 40, |_, _| {
                    let v = (base + rng.gen_range(-30.0..30.0f64)) as u8;
                    image::Rgb([v, v / 2, v / 3])
                });
                ClassifierSample {
                    id: format!("s{i}"),
                    image,
                    label,
                }
            })
            .collect()
    }

    fn toy() -> BackboneSpec {
        BackboneSpec {
            input_resolution: (32, 32),
            width: 4,
            ..Default::default()
        }
    }

    fn quick(epochs: usize) -> ClassifierConfig {
        ClassifierConfig {
            epochs,
            augmentation: AugmentationConfig::disabled(),
            ..Default::default()
        }
    }

    #[test]
    fn separable_set_reaches_full_accuracy() {
        let ck = train_classifier(&toy(), &quick(20), &separable(24, 1), &separable(8, 2)).unwrap();
        assert_eq!(ck.accuracy, 1.0);
        assert_eq!(ck.history.len(), 20);
        let model = Classifier::from_checkpoint(&ck).unwrap();
        let val = separable(8, 2);
        for s in &val {
            assert_eq!(model.probability(&s.image) >= 0.5, s.label);
        }
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let c = quick(0);
        let ck = train_classifier(&toy(), &c, &separable(4, 1), &[]).unwrap();
        let mut fresh = build_backbone(&toy()).unwrap();
        init_weights(fresh.as_mut(), 0.0, c.init_std, c.seed);
        let model = Classifier::from_checkpoint(&ck).unwrap();
        assert_eq!(flat_values(model.backbone.as_ref()), flat_values(fresh.as_ref()));
        assert_eq!(ck.epoch, 0);
    }

    #[test]
    fn single_class_and_bad_spec_rejected() {
        let mut s = separable(4, 1);
        s.iter_mut().for_each(|s| s.label = true);
        assert!(matches!(train_classifier(&toy(), &quick(1), &s, &[]), Err(Error::SingleClass)));
        let mut b = toy();
        b.input_resolution = (16, 64);
        b.name = "efficientnet_b4".into();
        match train_classifier(&b, &quick(1), &separable(4, 1), &[]) {
            Err(Error::Config(e)) => assert_eq!(e.len(), 2),
            _ => panic!("expected config error"),
        }
    }

    #[test]
    fn checkpoint_round_trip_and_member_failure() {
        let dir = tempfile::tempdir().unwrap();
        let ck = train_classifier(&toy(), &quick(1), &separable(4, 1), &[]).unwrap();
        ck.save(&dir.path().join("m")).unwrap();
        let img = &separable(1, 9)[0].image;
        let a = Classifier::from_checkpoint(&ck).unwrap().probability(img);
        let b = Classifier::load(&dir.path().join("m")).unwrap().probability(img);
        assert_eq!(a, b);
        let spec = EnsembleSpec {
            members: vec![
                EnsembleMember {
                    name: "ok".into(),
                    zoom: 1.0,
                    checkpoint: dir.path().join("m"),
                },
                EnsembleMember {
                    name: "gone".into(),
                    zoom: 1.0,
                    checkpoint: dir.path().join("nope"),
                },
            ],
            tta_ops: vec![],
        };
        match ensemble_predict(&spec, img, None) {
            Err(Error::Member { member, .. }) => assert_eq!(member, "gone"),
            other => panic!("expected member error, got {:?}", other.map(|_| ())),
        }
        let solo = EnsembleSpec {
            members: spec.members[..1].to_vec(),
            tta_ops: vec![],
        };
        assert_eq!(ensemble_predict(&solo, img, None).unwrap(), a);
    }

    #[test]
    fn tta_examples() {
        let img = RgbImage::from_fn(8, 8, |x, _| image::Rgb([x as u8 * 30, 0, 0]));
        let refs = HashMap::new();
        assert_eq!(tta_mean(&img, &[], &refs, |_| 0.3), 0.3);
        assert_eq!(tta_mean(&img, &default_tta_ops(), &refs, |_| 0.7), 0.7);
        let ops = [HistogramOp::Equalize, HistogramOp::Rescale { low: 2.0, high: 98.0 }];
        let mut calls = vec![0.2, 0.4, 0.9].into_iter();
        let cell = std::cell::RefCell::new(&mut calls);
        assert!((tta_mean(&img, &ops, &refs, |_| cell.borrow_mut().next().unwrap()) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn bce_gradient_matches_differences() {
        let z = Array1::from(vec![0.3f32, -1.1, 2.0]);
        let labels = [true, false, false];
        let (_, g) = bce_with_logits(&z, &labels);
        for i in 0..3 {
            let h = 1e-3f32;
            let mut a = z.clone();
            a[i] += h;
            let mut b = z.clone();
            b[i] -= h;
            let num = (bce_with_logits(&a, &labels).0 - bce_with_logits(&b, &labels).0) / (2.0 * h as f64);
            assert!((num - g[i] as f64).abs() < 1e-3);
        }
    }

    #[test]
    fn exact_sum_cases() {
        assert_eq!(exact_sum(&[]), 0.0);
        assert_eq!(exact_sum(&[1e100, 1.0, -1e100]), 1.0);
        assert_eq!(exact_sum(&[0.1; 10]), 1.0);
        assert!((mean_probability(&[0.2, 0.4, 0.6]) - 0.4).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn mean_is_order_free(mut v in prop::collection::vec(0.0f64..1.0, 1..40), seed in any::<u64>()) {
            let m = mean_probability(&v);
            v.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(m, mean_probability(&v));
            prop_assert!((0.0..=1.0).contains(&m));
            let doubled: Vec<f64> = v.iter().chain(v.iter()).copied().collect();
            prop_assert!((mean_probability(&doubled) - m).abs() <= 1e-15);
        }
    }
}
