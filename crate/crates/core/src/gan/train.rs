use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{s, Array1, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::data::{make_batch, GanSample, GanTask, TargetSpec};
use super::loss::{discriminator_logit_loss, generator_logit_loss, l1_grad, l1_loss};
use super::net::{Discriminator, DiscriminatorSpec, Generator, GeneratorSpec};
use crate::distmap::extract_fovea;
use crate::nn::{
    init_weights, read_state, write_atomic, write_state, Module, Optimizer, OptimizerKind, OptimizerState, Scalar, StateDict, Tensor,
};
use crate::preprocess::{AlignedTarget, AugmentationConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GaussianInit {
    pub mean: f64,
    pub std: f64,
}

impl Default for GaussianInit {
    fn default() -> Self {
        Self { mean: 0.0, std: 0.02 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Weight of the L1 term in the generator objective.
    pub lambda_l1: f64,
    pub learning_rate: f64,
    /// Epochs between learning-rate halvings.
    pub lr_halving_period: usize,
    pub epochs: usize,
    pub batch_size: usize,
    /// `(height, width)`.
    pub resolution: (usize, usize),
    pub init: GaussianInit,
    pub seed: u64,
    /// Checkpoint directory whose generator weights seed this run.
    pub warm_start: Option<PathBuf>,
    pub beta1: f64,
    pub beta2: f64,
    pub target: TargetSpec,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda_l1: 100.0,
            learning_rate: 1e-4,
            lr_halving_period: 50,
            epochs: 200,
            batch_size: 4,
            resolution: (640, 640),
            init: GaussianInit::default(),
            seed: 0,
            warm_start: None,
            beta1: 0.5,
            beta2: 0.999,
            target: TargetSpec::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if !(self.lambda_l1 >= 0.0) {
            errs.push(format!("train.lambda_l1 = {} must be >= 0", self.lambda_l1));
        }
        if !(self.learning_rate > 0.0) {
            errs.push(format!("train.learning_rate = {} must be > 0", self.learning_rate));
        }
        if self.lr_halving_period == 0 {
            errs.push("train.lr_halving_period must be at least 1".into());
        }
        if self.batch_size == 0 {
            errs.push("train.batch_size must be at least 1".into());
        }
        let (h, w) = self.resolution;
        if h == 0 || w == 0 || h % 4 != 0 || w % 4 != 0 {
            errs.push(format!("train.resolution = ({h}, {w}) must be positive multiples of 4"));
        }
        if !(self.init.std >= 0.0) {
            errs.push(format!("train.init.std = {} must be >= 0", self.init.std));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            errs.push("train.beta1 and train.beta2 must lie in [0, 1)".into());
        }
        if !(self.target.radius_fraction > 0.0) {
            errs.push(format!("train.target.radius_fraction = {} must be > 0", self.target.radius_fraction));
        }
        errs
    }

    /// Learning rate in effect during `epoch` (0-based).
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let halvings = epoch / self.lr_halving_period.max(1);
        self.learning_rate * 0.5f64.powi(halvings.min(1000) as i32)
    }
}

/// Everything that determines a GAN run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GanConfig {
    pub task: GanTask,
    pub generator: GeneratorSpec,
    pub discriminator: DiscriminatorSpec,
    pub train: TrainConfig,
    pub augmentation: AugmentationConfig,
}

impl GanConfig {
    /// Defaults with channel counts matched to `task`.
    pub fn for_task(task: GanTask) -> Self {
        let c = task.input_channels();
        Self {
            task,
            generator: GeneratorSpec {
                in_channels: c,
                ..Default::default()
            },
            discriminator: DiscriminatorSpec {
                image_channels: c,
                ..Default::default()
            },
            train: TrainConfig::default(),
            augmentation: AugmentationConfig::default(),
        }
    }

    pub fn validate(&self) -> Vec<String> {
        let mut errs = self.generator.validate();
        errs.extend(self.train.validate());
        errs.extend(self.augmentation.validate());
        let c = self.task.input_channels();
        if self.generator.in_channels != c {
            errs.push(format!(
                "generator.in_channels = {} but task {} takes {c}",
                self.generator.in_channels, self.task
            ));
        }
        if self.generator.out_channels != self.discriminator.map_channels {
            errs.push("generator.out_channels must equal discriminator.map_channels".into());
        }
        if self.discriminator.conditional && self.discriminator.image_channels != c {
            errs.push(format!("discriminator.image_channels must be {c} for task {}", self.task));
        }
        errs
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StepLosses {
    pub d_loss: f64,
    pub g_adv: f64,
    pub g_l1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub d_loss: f64,
    pub g_adv: f64,
    pub g_l1: f64,
    pub val_score: f64,
}

pub const LOSS_HEADER: &str = "epoch,d_loss,g_adv,g_l1,val_score";

fn to_f64<T: Scalar>(a: &Array1<T>) -> Vec<f64> {
    a.iter().map(|v| v.as_f64()).collect()
}

fn from_f64<T: Scalar>(v: &[f64]) -> Array1<T> {
    v.iter().map(|&x| T::of(x)).collect()
}

/// Generator-side backward pass after a training-mode generator forward that
/// produced `fake`: non-saturating adversarial term plus `lambda * L1`.
/// Accumulates generator gradients, leaves discriminator running statistics
/// untouched, and returns `(adv, l1)`.
fn generator_backward<T: Scalar>(
    g: &mut Generator<T>,
    d: &mut Discriminator<T>,
    x: &Tensor<T>,
    fake: &Tensor<T>,
    y: &Tensor<T>,
    lambda: f64,
) -> Result<(f64, f64)> {
    // same real+fake batch composition as the discriminator step, so batch
    // statistics match what D was trained on; only the fake logits carry loss
    let n = x.dim().0;
    let both = ndarray::concatenate(Axis(0), &[d.input(x, y).view(), d.input(x, fake).view()]).expect("same shape");
    d.track_running_stats(false);
    let logits = to_f64(&d.forward(&both, true));
    d.track_running_stats(true);
    let (adv, gf) = generator_logit_loss(&logits[n..]);
    let dlogits: Vec<f64> = std::iter::repeat(0.0).take(n).chain(gf).collect();
    let dinput = d.backward(&from_f64(&dlogits), true).expect("input gradient requested");
    let skip = if d.spec().conditional { d.spec().image_channels } else { 0 };
    let mut dfake = dinput.slice(s![n.., skip.., .., ..]).to_owned();
    let l1 = l1_loss(fake, y)?;
    dfake.scaled_add(T::of(lambda), &l1_grad(fake, y));
    g.backward(&dfake);
    Ok((adv, l1))
}

/// Generator objective `-mean log D(G(x)) + lambda * L1(G(x), y)` with both
/// networks in training mode (D sees `y` and `G(x)` in one batch); accumulates
/// its gradient into `g`.
pub fn generator_objective<T: Scalar>(
    g: &mut Generator<T>,
    d: &mut Discriminator<T>,
    x: &Tensor<T>,
    y: &Tensor<T>,
    lambda: f64,
) -> Result<f64> {
    let fake = g.forward(x, true)?;
    let (adv, l1) = generator_backward(g, d, x, &fake, y, lambda)?;
    Ok(super::loss::combined_generator_objective(adv, l1, lambda))
}

/// Holds both networks and their optimizers; one [`GanTrainer::step`] is one
/// discriminator update followed by one generator update.
pub struct GanTrainer {
    config: GanConfig,
    pub generator: Generator<f32>,
    pub discriminator: Discriminator<f32>,
    g_opt: Optimizer,
    d_opt: Optimizer,
    epoch: usize,
    steps: usize,
}

impl GanTrainer {
    pub fn new(config: GanConfig) -> Result<Self> {
        let errs = config.validate();
        if !errs.is_empty() {
            return Err(Error::Config(errs));
        }
        let t = &config.train;
        let mut generator = Generator::new(&config.generator)?;
        let mut discriminator = Discriminator::new(&config.discriminator);
        init_weights(&mut generator, t.init.mean, t.init.std, t.seed);
        init_weights(&mut discriminator, t.init.mean, t.init.std, t.seed ^ 0x9e37_79b9_7f4a_7c15);
        if let Some(dir) = &t.warm_start {
            let ck = Checkpoint::load(dir)?;
            generator.load_state_dict(&ck.generator).map_err(|e| Error::Checkpoint {
                path: dir.clone(),
                message: format!("warm start: {e}"),
            })?;
        }
        let kind = OptimizerKind::adam(t.beta1, t.beta2);
        Ok(Self {
            g_opt: Optimizer::new(kind, t.learning_rate),
            d_opt: Optimizer::new(kind, t.learning_rate),
            generator,
            discriminator,
            epoch: 0,
            steps: 0,
            config,
        })
    }

    pub fn config(&self) -> &GanConfig {
        &self.config
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    fn non_finite(&self, detail: String) -> Error {
        Error::NonFinite {
            epoch: self.epoch,
            step: self.steps,
            detail,
        }
    }

    /// One discriminator update on the real batch and the detached fake batch,
    /// then one generator update reusing the same generator forward pass.
    pub fn step(&mut self, x: &Tensor<f32>, y: &Tensor<f32>) -> Result<StepLosses> {
        let n = x.dim().0;
        let fake = self.generator.forward(x, true)?;
        if fake.iter().any(|v| !v.is_finite()) {
            return Err(self.non_finite("generator output".into()));
        }

        let d = &mut self.discriminator;
        d.zero_grad();
        let real_in = d.input(x, y);
        let fake_in = d.input(x, &fake);
        let both = ndarray::concatenate(Axis(0), &[real_in.view(), fake_in.view()]).expect("same shape");
        let logits = to_f64(&d.forward(&both, true));
        let (d_loss, gr, gf) = discriminator_logit_loss(&logits[..n], &logits[n..]);
        if !d_loss.is_finite() {
            return Err(self.non_finite(format!("discriminator loss {d_loss}")));
        }
        let dlogits: Vec<f64> = gr.into_iter().chain(gf).collect();
        d.backward(&from_f64(&dlogits), false);
        self.d_opt.step(d);

        self.generator.zero_grad();
        let lambda = self.config.train.lambda_l1;
        let (g_adv, g_l1) = generator_backward(&mut self.generator, &mut self.discriminator, x, &fake, y, lambda)?;
        if !(g_adv.is_finite() && g_l1.is_finite()) {
            return Err(self.non_finite(format!("generator losses adv={g_adv} l1={g_l1}")));
        }
        self.g_opt.step(&mut self.generator);
        self.steps += 1;
        Ok(StepLosses { d_loss, g_adv, g_l1 })
    }

    /// One pass over `samples` in a seed- and epoch-determined order. Returns
    /// batch-averaged losses.
    pub fn train_epoch(&mut self, samples: &[GanSample]) -> Result<StepLosses> {
        if samples.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let lr = self.config.train.lr_at(self.epoch);
        self.g_opt.set_learning_rate(lr);
        self.d_opt.set_learning_rate(lr);

        let mut order: Vec<usize> = (0..samples.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.train.seed);
        rng.set_stream(self.epoch as u64);
        order.shuffle(&mut rng);

        let mut sum = StepLosses::default();
        let mut batches = 0;
        for chunk in order.chunks(self.config.train.batch_size) {
            let batch: Vec<&GanSample> = chunk.iter().map(|&i| &samples[i]).collect();
            let (x, y) = make_batch(
                self.config.task,
                &batch,
                &self.config.augmentation,
                &self.config.train.target,
                self.epoch as u64,
            )?;
            let l = self.step(&x, &y)?;
            sum.d_loss += l.d_loss;
            sum.g_adv += l.g_adv;
            sum.g_l1 += l.g_l1;
            batches += 1;
        }
        self.epoch += 1;
        let k = batches as f64;
        Ok(StepLosses {
            d_loss: sum.d_loss / k,
            g_adv: sum.g_adv / k,
            g_l1: sum.g_l1 / k,
        })
    }

    /// Higher is better: mean Dice of the thresholded output for segmentation
    /// tasks, negative mean pixel error for the fovea.
    pub fn validation_score(&self, samples: &[GanSample]) -> Result<f64> {
        let mut total = 0.0;
        for s in samples {
            let x = make_batch(
                self.config.task,
                &[s],
                &AugmentationConfig::disabled(),
                &self.config.train.target,
                0,
            )?
            .0;
            let out = self.generator.eval(&x)?;
            let map = out.slice(s![0, 0, .., ..]).mapv(|v| (v as f64 + 1.0) / 2.0);
            total += match &s.target {
                AlignedTarget::Mask(m) => {
                    let inter = ndarray::Zip::from(&map).and(m).fold(0usize, |a, &p, &t| a + (p >= 0.5 && t) as usize);
                    let a = map.iter().filter(|&&p| p >= 0.5).count();
                    let b = m.iter().filter(|&&t| t).count();
                    if a + b == 0 {
                        1.0
                    } else {
                        2.0 * inter as f64 / (a + b) as f64
                    }
                }
                AlignedTarget::Point(p) => {
                    let (h, w) = map.dim();
                    match extract_fovea(&map) {
                        Ok(q) => -q.distance(p),
                        Err(_) => -((h * h + w * w) as f64).sqrt(),
                    }
                }
                AlignedTarget::Map(_) => 0.0,
            };
        }
        Ok(total / samples.len().max(1) as f64)
    }

    pub fn checkpoint(&self, best_score: f64, snapshot: &str) -> Checkpoint {
        Checkpoint {
            config: self.config.clone(),
            generator: self.generator.state_dict(),
            discriminator: self.discriminator.state_dict(),
            generator_optimizer: self.g_opt.state().clone(),
            discriminator_optimizer: self.d_opt.state().clone(),
            epoch: self.epoch,
            best_score,
            config_snapshot: snapshot.to_string(),
        }
    }
}

/// Trained weights plus everything needed to resume or reproduce.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    #[serde(with = "json_text")]
    pub config: GanConfig,
    pub generator: StateDict<f32>,
    pub discriminator: StateDict<f32>,
    pub generator_optimizer: OptimizerState,
    pub discriminator_optimizer: OptimizerState,
    /// Epochs completed.
    pub epoch: usize,
    pub best_score: f64,
    pub config_snapshot: String,
}

/// Stores a value as embedded JSON text; the binary format cannot carry tagged enums.
mod json_text {
    use serde::de::{DeserializeOwned, Error as _};
    use serde::ser::Error as _;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<T: Serialize, S: Serializer>(v: &T, s: S) -> std::result::Result<S::Ok, S::Error> {
        serde_json::to_string(v).map_err(S::Error::custom)?.serialize(s)
    }

    pub fn deserialize<'de, T: DeserializeOwned, D: Deserializer<'de>>(d: D) -> std::result::Result<T, D::Error> {
        serde_json::from_str(&String::deserialize(d)?).map_err(D::Error::custom)
    }
}

pub const CHECKPOINT_FILE: &str = "checkpoint.bin";

/// Writes `bytes` next to `path` and renames over it.
impl Checkpoint {
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut bytes = Vec::new();
        write_state(&mut bytes, self)?;
        write_atomic(&dir.join(CHECKPOINT_FILE), &bytes)?;
        let meta = serde_json::json!({
            "task": self.config.task.to_string(),
            "epoch": self.epoch,
            "best_score": self.best_score,
        });
        write_atomic(&dir.join("meta.json"), meta.to_string().as_bytes())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(CHECKPOINT_FILE);
        let f = fs::File::open(&path).map_err(|_| Error::Checkpoint {
            path: path.clone(),
            message: "missing checkpoint".into(),
        })?;
        read_state(std::io::BufReader::new(f)).map_err(|e| match e {
            Error::Checkpoint { message, .. } => Error::Checkpoint { path, message },
            other => other,
        })
    }

    pub fn build_generator(&self) -> Result<Generator<f32>> {
        let mut g = Generator::new(&self.config.generator)?;
        g.load_state_dict(&self.generator)?;
        Ok(g)
    }
}

fn format_losses(history: &[EpochLog]) -> String {
    let mut s = String::from(LOSS_HEADER);
    s.push('\n');
    for l in history {
        s.push_str(&format!("{},{},{},{},{}\n", l.epoch, l.d_loss, l.g_adv, l.g_l1, l.val_score));
    }
    s
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub run_dir: PathBuf,
    pub history: Vec<EpochLog>,
    pub best_epoch: Option<usize>,
    pub best_score: f64,
}

/// Full training run. Writes `config.snapshot`, `losses.csv` (rewritten every
/// epoch), `ckpt-last/` every epoch and `ckpt-best/` whenever the validation
/// score improves. Without validation samples the score is `-g_l1`.
pub fn train(
    config: &GanConfig,
    train_samples: &[GanSample],
    val_samples: &[GanSample],
    run_dir: &Path,
    snapshot: &str,
) -> Result<TrainOutcome> {
    if train_samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut trainer = GanTrainer::new(config.clone())?;
    fs::create_dir_all(run_dir).map_err(|e| Error::io(run_dir, e))?;
    write_atomic(&run_dir.join("config.snapshot"), snapshot.as_bytes())?;

    let mut history = Vec::new();
    let mut best = f64::NEG_INFINITY;
    let mut best_epoch = None;
    if config.train.epochs == 0 {
        let ck = trainer.checkpoint(best, snapshot);
        ck.save(&run_dir.join("ckpt-last"))?;
        ck.save(&run_dir.join("ckpt-best"))?;
    }
    for epoch in 0..config.train.epochs {
        let l = trainer.train_epoch(train_samples)?;
        let val_score = if val_samples.is_empty() {
            -l.g_l1
        } else {
            trainer.validation_score(val_samples)?
        };
        let log = EpochLog {
            epoch,
            d_loss: l.d_loss,
            g_adv: l.g_adv,
            g_l1: l.g_l1,
            val_score,
        };
        log::info!(
            "{} epoch {epoch}: d {:.4} adv {:.4} l1 {:.4} val {:.4}",
            config.task,
            l.d_loss,
            l.g_adv,
            l.g_l1,
            val_score
        );
        history.push(log);
        write_atomic(&run_dir.join("losses.csv"), format_losses(&history).as_bytes())?;
        if val_score > best {
            best = val_score;
            best_epoch = Some(epoch);
            trainer.checkpoint(best, snapshot).save(&run_dir.join("ckpt-best"))?;
        }
        trainer.checkpoint(best, snapshot).save(&run_dir.join("ckpt-last"))?;
    }
    Ok(TrainOutcome {
        run_dir: run_dir.to_path_buf(),
        history,
        best_epoch,
        best_score: best,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::FoveaCoordinate;
    use crate::nn::flat_values;
    use image::RgbImage;

    fn small_config(task: GanTask) -> GanConfig {
        let mut c = GanConfig::for_task(task);
        c.generator.base_width = 2;
        c.generator.n_special_blocks = 1;
        c.train.resolution = (16, 16);
        c.train.batch_size = 2;
        c.train.epochs = 1;
        c.augmentation = AugmentationConfig::disabled();
        c
    }

    fn samples(n: usize) -> Vec<GanSample> {
        (0..n)
            .map(|i| GanSample {
                id: format!("s{i}"),
                image: RgbImage::from_fn(16, 16, |x, y| image::Rgb([(x * 9) as u8, (y * 13 + i as u32) as u8, 40])),
                target: AlignedTarget::Point(FoveaCoordinate {
                    x: 4.0 + i as f64,
                    y: 8.0,
                }),
            })
            .collect()
    }

    #[test]
    fn schedule_halves() {
        let t = TrainConfig::default();
        assert_eq!(t.lr_at(0), 1e-4);
        assert_eq!(t.lr_at(49), 1e-4);
        assert_eq!(t.lr_at(50), 5e-5);
        assert_eq!(t.lr_at(100), 2.5e-5);
        assert_eq!(t.lr_at(150), 1.25e-5);
    }

    #[test]
    fn validation_lists_every_problem() {
        let mut c = GanConfig::for_task(GanTask::Fovea);
        c.train.learning_rate = 0.0;
        c.train.resolution = (30, 32);
        c.train.lambda_l1 = -1.0;
        c.generator.in_channels = 1;
        assert_eq!(c.validate().len(), 4);
        assert!(matches!(GanTrainer::new(c), Err(Error::Config(v)) if v.len() == 4));
    }

    #[test]
    fn each_step_touches_only_its_network() {
        let mut t = GanTrainer::new(small_config(GanTask::Fovea)).unwrap();
        let data = samples(2);
        let refs: Vec<&GanSample> = data.iter().collect();
        let (x, y) = make_batch(GanTask::Fovea, &refs, &AugmentationConfig::disabled(), &TargetSpec::default(), 0).unwrap();

        // discriminator half of a step, by hand
        let g0 = flat_values(&t.generator);
        let fake = t.generator.forward(&x, true).unwrap();
        let d = &mut t.discriminator;
        let both = ndarray::concatenate(Axis(0), &[y.view(), fake.view()]).unwrap();
        let logits = to_f64(&d.forward(&both, true));
        let (_, gr, gf) = discriminator_logit_loss(&logits[..2], &logits[2..]);
        d.backward(&from_f64(&gr.into_iter().chain(gf).collect::<Vec<_>>()), false);
        t.d_opt.step(d);
        assert_eq!(flat_values(&t.generator), g0);

        // generator half
        let d0 = t.discriminator.state_dict();
        t.generator.zero_grad();
        generator_backward(&mut t.generator, &mut t.discriminator, &x, &fake, &y, 100.0).unwrap();
        t.g_opt.step(&mut t.generator);
        assert_eq!(t.discriminator.state_dict(), d0);
        assert_ne!(flat_values(&t.generator), g0);
    }

    #[test]
    fn smoke_run_writes_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let c = small_config(GanTask::Fovea);
        let out = train(&c, &samples(4), &samples(2), dir.path(), "snapshot").unwrap();
        assert_eq!(out.history.len(), 1);
        let h = out.history[0];
        assert!(h.d_loss.is_finite() && h.g_adv.is_finite() && h.g_l1.is_finite());
        for f in ["config.snapshot", "losses.csv", "ckpt-best/checkpoint.bin", "ckpt-last/checkpoint.bin"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let csv = fs::read_to_string(dir.path().join("losses.csv")).unwrap();
        assert!(csv.starts_with(LOSS_HEADER));
    }

    #[test]
    fn reload_is_bit_identical_and_warm_start_copies_generator() {
        let dir = tempfile::tempdir().unwrap();
        let c = small_config(GanTask::Fovea);
        let mut t = GanTrainer::new(c.clone()).unwrap();
        t.train_epoch(&samples(2)).unwrap();
        t.checkpoint(0.0, "").save(dir.path()).unwrap();
        let x = make_batch(GanTask::Fovea, &[&samples(1)[0]], &AugmentationConfig::disabled(), &TargetSpec::default(), 0)
            .unwrap()
            .0;
        let before = t.generator.eval(&x).unwrap();
        let loaded = Checkpoint::load(dir.path()).unwrap().build_generator().unwrap();
        assert_eq!(loaded.eval(&x).unwrap(), before);

        let mut lesion = small_config(GanTask::Lesion(crate::data::LesionKind::Drusen));
        lesion.train.warm_start = Some(dir.path().to_path_buf());
        lesion.train.seed = 99;
        let w = GanTrainer::new(lesion).unwrap();
        assert_eq!(w.generator.eval(&x).unwrap(), before);
    }

    #[test]
    fn missing_checkpoint_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(Checkpoint::load(dir.path()), Err(Error::Checkpoint { .. })));
    }

    #[test]
    fn same_seed_same_losses() {
        let c = small_config(GanTask::Fovea);
        let run = || {
            let mut t = GanTrainer::new(c.clone()).unwrap();
            (0..2).map(|_| t.train_epoch(&samples(4)).unwrap()).collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }
}
