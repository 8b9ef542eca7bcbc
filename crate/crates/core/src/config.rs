//! Run configuration: one TOML file, dotted-path overrides and a snapshot with
//! every default written out.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::classify::{default_tta_ops, BackboneSpec, ClassifierConfig};
use crate::data::Task;
use crate::gan::{DiscriminatorSpec, GanConfig, GanTask, GeneratorSpec, TrainConfig};
use crate::metrics::EvaluationOptions;
use crate::postprocess::PostprocessConfig;
use crate::preprocess::{AugmentationConfig, CropSpec, HistogramOp};
use crate::{Error, Result};

/// Environment variable that replaces `seed`.
pub const SEED_ENV: &str = "ADAM_PIPE_SEED";
pub const SNAPSHOT_FILE: &str = "config.snapshot";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataPaths {
    pub train: Option<PathBuf>,
    pub val: Option<PathBuf>,
    pub test: Option<PathBuf>,
}

/// GAN settings shared by the od, fovea and lesion tasks. Channel counts are
/// filled in from the task.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GanSection {
    pub generator: GeneratorSpec,
    pub discriminator: DiscriminatorSpec,
    pub train: TrainConfig,
    pub augmentation: AugmentationConfig,
}

/// One classifier is trained per backbone and zoom level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierSection {
    pub train: ClassifierConfig,
    pub backbones: Vec<BackboneSpec>,
    pub crops: CropSpec,
    pub tta_ops: Vec<HistogramOp>,
    /// Minority/majority ratio to oversample the training set to.
    pub oversample_ratio: Option<f64>,
}

impl Default for ClassifierSection {
    fn default() -> Self {
        Self {
            train: ClassifierConfig::default(),
            backbones: vec![BackboneSpec::default()],
            crops: CropSpec::default(),
            tta_ops: default_tta_ops(),
            oversample_ratio: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub task: Task,
    /// Master seed; component seeds are set from it.
    pub seed: u64,
    pub output_dir: PathBuf,
    pub data: DataPaths,
    pub gan: GanSection,
    pub classifier: ClassifierSection,
    pub postprocess: PostprocessConfig,
    pub evaluation: EvaluationOptions,
}

impl Default for RunConfig {
    fn default() -> Self {
        let mut c = Self {
            task: Task::Classify,
            seed: 0,
            output_dir: PathBuf::from("runs/default"),
            data: DataPaths::default(),
            gan: GanSection::default(),
            classifier: ClassifierSection::default(),
            postprocess: PostprocessConfig::default(),
            evaluation: EvaluationOptions::default(),
        };
        c.materialize();
        c
    }
}

pub fn gan_task(task: Task) -> Option<GanTask> {
    match task {
        Task::Classify => None,
        Task::Od => Some(GanTask::OdSeg),
        Task::Fovea => Some(GanTask::Fovea),
        Task::Lesion(k) => Some(GanTask::Lesion(k)),
    }
}

/// Sets `path` (dot separated) in `root` to `value`, creating tables on the way.
pub fn set_dotted(root: &mut toml::Table, path: &str, value: toml::Value) -> Result<()> {
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(Error::Config(vec![format!("bad override path `{path}`")]));
    }
    let (last, parents) = keys.split_last().expect("split yields one key");
    let mut table = root;
    for k in parents {
        let slot = table
            .entry(k.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = slot
            .as_table_mut()
            .ok_or_else(|| Error::Config(vec![format!("override `{path}`: `{k}` is not a table")]))?;
    }
    table.insert(last.to_string(), value);
    Ok(())
}

/// `key.path=value`; the value is read as a TOML literal, falling back to a bare string.
pub fn parse_override(text: &str) -> Result<(String, toml::Value)> {
    let (key, raw) = text
        .split_once('=')
        .ok_or_else(|| Error::Config(vec![format!("override `{text}` is not key=value")]))?;
    let raw = raw.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    Ok((key.trim().to_string(), value))
}

impl RunConfig {
    /// Reads `path` (or starts from defaults), applies `overrides` in order and
    /// then the seed from the environment, if set.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let text = match path {
            Some(p) => fs::read_to_string(p).map_err(|e| Error::io(p, e))?,
            None => String::new(),
        };
        let env = std::env::var(SEED_ENV).ok();
        Self::from_parts(&text, overrides, env.as_deref())
    }

    /// [`RunConfig::load`] without touching the file system or environment.
    pub fn from_parts(text: &str, overrides: &[String], env_seed: Option<&str>) -> Result<Self> {
        let mut root: toml::Table = toml::from_str(text).map_err(|e| Error::Config(vec![e.to_string()]))?;
        for o in overrides {
            let (k, v) = parse_override(o)?;
            set_dotted(&mut root, &k, v)?;
        }
        if let Some(s) = env_seed {
            let seed: i64 = s
                .trim()
                .parse()
                .ok()
                .filter(|v| *v >= 0)
                .ok_or_else(|| Error::Config(vec![format!("{SEED_ENV} = `{s}` is not a non-negative integer")]))?;
            root.insert("seed".into(), toml::Value::Integer(seed));
        }
        let mut config: RunConfig =
            toml::Value::Table(root).try_into().map_err(|e: toml::de::Error| Error::Config(vec![e.to_string()]))?;
        config.materialize();
        Ok(config)
    }

    /// Copies the master seed into every component and matches channel counts to the task.
    pub fn materialize(&mut self) {
        let s = self.seed;
        self.gan.train.seed = s;
        self.gan.augmentation.seed = s;
        self.classifier.train.seed = s;
        self.classifier.train.augmentation.seed = s;
        if let Some(t) = gan_task(self.task) {
            let c = t.input_channels();
            self.gan.generator.in_channels = c;
            self.gan.discriminator.image_channels = c;
        }
    }

    /// GAN config for the task; `None` for classification.
    pub fn gan_config(&self) -> Option<GanConfig> {
        gan_task(self.task).map(|task| GanConfig {
            task,
            generator: self.gan.generator.clone(),
            discriminator: self.gan.discriminator.clone(),
            train: self.gan.train.clone(),
            augmentation: self.gan.augmentation.clone(),
        })
    }

    /// Every violated field, for the task's sections only.
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if self.seed > i64::MAX as u64 {
            errs.push(format!("seed = {} exceeds {}", self.seed, i64::MAX));
        }
        if self.output_dir.as_os_str().is_empty() {
            errs.push("output_dir must not be empty".into());
        }
        match self.gan_config() {
            Some(g) => errs.extend(g.validate().into_iter().map(|e| format!("gan: {e}"))),
            None => {
                let c = &self.classifier;
                errs.extend(c.train.validate().into_iter().map(|e| format!("classifier.train: {e}")));
                if c.backbones.is_empty() {
                    errs.push("classifier.backbones must not be empty".into());
                }
                for b in &c.backbones {
                    errs.extend(b.validate().into_iter().map(|e| format!("classifier.backbones `{}`: {e}", b.name)));
                }
                errs.extend(c.crops.validate().into_iter().map(|e| format!("classifier.{e}")));
                if let Some(r) = c.oversample_ratio {
                    if !(r > 0.0 && r.is_finite()) {
                        errs.push(format!("classifier.oversample_ratio = {r} must be positive"));
                    }
                }
            }
        }
        let p = &self.postprocess;
        if !(0.0..=1.0).contains(&p.binarize_threshold) {
            errs.push(format!("postprocess.binarize_threshold = {} not in [0, 1]", p.binarize_threshold));
        }
        for (name, v) in [("od_min_area_fraction", p.od_min_area_fraction), ("lesion_min_area_fraction", p.lesion_min_area_fraction)] {
            if !(0.0..1.0).contains(&v) {
                errs.push(format!("postprocess.{name} = {v} not in [0, 1)"));
            }
        }
        if self.evaluation.histogram_bins == 0 {
            errs.push("evaluation.histogram_bins must be at least 1".into());
        }
        errs
    }

    pub fn validated(self) -> Result<Self> {
        let errs = self.validate();
        if errs.is_empty() {
            Ok(self)
        } else {
            Err(Error::Config(errs))
        }
    }

    /// The whole config as TOML, defaults included. Reloading it gives back `self`.
    pub fn snapshot(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(vec![format!("cannot serialize config: {e}")]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::LesionKind;

    #[test]
    fn snapshot_round_trips_with_every_default() {
        let c = RunConfig::from_parts("task = \"fovea\"\n[gan.train]\nepochs = 5\n", &[], None).unwrap();
        let snap = c.snapshot().unwrap();
        for field in ["lambda_l1", "lr_halving_period", "flip_probability", "binarize_threshold", "zoom_levels", "empty_dice"] {
            assert!(snap.contains(field), "{field} missing from snapshot");
        }
        assert_eq!(RunConfig::from_parts(&snap, &[], None).unwrap(), c);
    }

    #[test]
    fn overrides_and_env_seed() {
        let o = vec![
            "task=lesion:drusen".to_string(),
            "gan.train.resolution=[64, 64]".into(),
            "gan.generator.base_width=8".into(),
            "output_dir=out/x".into(),
        ];
        let c = RunConfig::from_parts("seed = 3", &o, Some("11")).unwrap();
        assert_eq!(c.task, Task::Lesion(LesionKind::Drusen));
        assert_eq!(c.gan.train.resolution, (64, 64));
        assert_eq!(c.gan.generator.base_width, 8);
        assert_eq!(c.output_dir, PathBuf::from("out/x"));
        assert_eq!((c.seed, c.gan.train.seed, c.classifier.train.seed), (11, 11, 11));
        assert!(RunConfig::from_parts("", &[], Some("-1")).is_err());
        assert!(RunConfig::from_parts("", &["seed".into()], None).is_err());
    }

    #[test]
    fn od_task_sets_single_channel() {
        let c = RunConfig::from_parts("task = \"od\"", &[], None).unwrap();
        assert_eq!(c.gan.generator.in_channels, 1);
        assert!(c.validate().is_empty());
    }

    #[test]
    fn lists_every_violation() {
        let text = "task = \"fovea\"\n[gan.train]\nbatch_size = 0\nlearning_rate = -1.0\n[postprocess]\nbinarize_threshold = 2.0\n";
        let errs = RunConfig::from_parts(text, &[], None).unwrap().validate();
        assert_eq!(errs.len(), 3, "{errs:?}");
        let c = RunConfig::from_parts("[classifier]\nbackbones = []\n", &[], None).unwrap();
        assert_eq!(c.validate().len(), 1);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(RunConfig::from_parts("tsak = \"od\"", &[], None), Err(Error::Config(_))));
        assert!(RunConfig::from_parts("task = \"segment\"", &[], None).is_err());
    }
}
