//! The `train`, `infer`, `evaluate` and `report` commands over a [`RunConfig`].

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use image::RgbImage;

use crate::classify::{classifier_samples, train_classifier, Ensemble, EnsembleMember, EnsembleSpec, ClassifierCheckpoint};
use crate::config::{RunConfig, SNAPSHOT_FILE};
use crate::data::{load_manifest, oversample, DatasetManifest, Split, Task};
use crate::distmap::extract_fovea;
use crate::gan::{self, prepare_manifest, GanModel, CHECKPOINT_FILE};
use crate::metrics::{evaluate, plot_series, read_predictions, write_predictions, EvaluationReport, Prediction, PREDICTIONS_FILE};
use crate::nn::write_atomic;
use crate::postprocess::{lesion_postprocess, od_postprocess, PostprocessConfig};
use crate::preprocess::HistogramOp;
use crate::raster::{load_rgb, save_map16, save_mask};
use crate::{Error, Result};

pub const ENSEMBLE_FILE: &str = "ensemble.json";
pub const CLASSIFIER_HISTORY_FILE: &str = "classifier_history.csv";
pub const SUMMARY_FILE: &str = "summary.md";

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn require<'a>(path: &'a Option<PathBuf>, field: &str) -> Result<&'a Path> {
    path.as_deref()
        .ok_or_else(|| Error::Config(vec![format!("{field} is required for this command")]))
}

/// Trains the configured task into `config.output_dir` and returns that directory.
///
/// GAN tasks leave `losses.csv`, `ckpt-best/` and `ckpt-last/`. Classification
/// trains one member per backbone and zoom level under `members/` and writes
/// `ensemble.json` naming them.
pub fn cmd_train(config: &RunConfig) -> Result<PathBuf> {
    let config = config.clone().validated()?;
    let train_path = require(&config.data.train, "data.train")?;
    let out = config.output_dir.clone();
    create_dir(&out)?;
    let snapshot = config.snapshot()?;
    write_atomic(&out.join(SNAPSHOT_FILE), snapshot.as_bytes())?;
    let train_m = load_manifest(train_path, Split::Train)?;
    let val_m = config.data.val.as_deref().map(|p| load_manifest(p, Split::Val)).transpose()?;

    if let Some(gc) = config.gan_config() {
        let res = gc.train.resolution;
        let tr = prepare_manifest(gc.task, &train_m, res)?;
        let va = match &val_m {
            Some(m) => prepare_manifest(gc.task, m, res)?,
            None => Vec::new(),
        };
        log::info!("{}: {} training and {} validation samples", gc.task, tr.len(), va.len());
        let outcome = gan::train(&gc, &tr, &va, &out, &snapshot)?;
        log::info!("best epoch {:?}, score {:.4}", outcome.best_epoch, outcome.best_score);
        return Ok(out);
    }

    let c = &config.classifier;
    let train_m = match c.oversample_ratio {
        Some(r) => oversample(&train_m, r)?,
        None => train_m,
    };
    let mut members = Vec::new();
    let mut history = String::from("member,epoch,loss,accuracy\n");
    for (bi, backbone) in c.backbones.iter().enumerate() {
        for &zoom in &c.crops.zoom_levels {
            let idx = members.len();
            let name = format!("{bi}_{}_z{zoom}", backbone.name);
            let tr = classifier_samples(&train_m, zoom)?;
            let va = match &val_m {
                Some(m) => classifier_samples(m, zoom)?,
                None => Vec::new(),
            };
            // members differ in initialization even when backbone and data coincide
            let mut tc = c.train.clone();
            tc.seed = tc.seed.wrapping_add(idx as u64);
            log::info!("training member {name} on {} crops", tr.len());
            let ck = train_classifier(backbone, &tc, &tr, &va)?;
            let rel = Path::new("members").join(&name);
            ck.save(&out.join(&rel))?;
            for h in &ck.history {
                let _ = writeln!(history, "{name},{},{:.6},{:.6}", h.epoch, h.loss, h.accuracy);
            }
            members.push(EnsembleMember {
                name,
                zoom,
                checkpoint: rel,
            });
        }
    }
    let spec = EnsembleSpec {
        members,
        tta_ops: c.tta_ops.clone(),
    };
    let json = serde_json::to_string_pretty(&spec).expect("ensemble spec serializes");
    write_atomic(&out.join(ENSEMBLE_FILE), json.as_bytes())?;
    write_atomic(&out.join(CLASSIFIER_HISTORY_FILE), history.as_bytes())?;
    Ok(out)
}

/// Reads an ensemble spec from a run directory or the file itself. Relative
/// member paths resolve against the file's directory.
pub fn load_ensemble_spec(path: &Path) -> Result<EnsembleSpec> {
    let file = if path.is_dir() { path.join(ENSEMBLE_FILE) } else { path.to_path_buf() };
    let text = fs::read_to_string(&file).map_err(|e| Error::io(&file, e))?;
    let mut spec: EnsembleSpec = serde_json::from_str(&text).map_err(|e| Error::Checkpoint {
        path: file.clone(),
        message: e.to_string(),
    })?;
    let base = file.parent().unwrap_or(Path::new("."));
    for m in &mut spec.members {
        if m.checkpoint.is_relative() {
            m.checkpoint = base.join(&m.checkpoint);
        }
    }
    Ok(spec)
}

/// A GAN checkpoint directory, or a run directory holding `ckpt-best/`.
pub fn resolve_gan_checkpoint(path: &Path) -> PathBuf {
    if !path.join(CHECKPOINT_FILE).exists() && path.join("ckpt-best").join(CHECKPOINT_FILE).exists() {
        path.join("ckpt-best")
    } else {
        path.to_path_buf()
    }
}

fn load_image(manifest: &DatasetManifest, path: &Path) -> Result<RgbImage> {
    load_rgb(&manifest.resolve(path))
}

/// Runs the trained model over every manifest row and writes `predictions.csv`
/// into `out_dir`, plus `masks/` for segmentation and raw `maps/` for GAN tasks.
pub fn cmd_infer(config: &RunConfig, checkpoint: &Path, manifest_path: &Path, out_dir: &Path) -> Result<PathBuf> {
    let config = config.clone().validated()?;
    let manifest = load_manifest(manifest_path, Split::Test)?;
    create_dir(out_dir)?;
    let mut rows = Vec::with_capacity(manifest.len());

    if config.task == Task::Classify {
        let spec = load_ensemble_spec(checkpoint)?;
        let ensemble = Ensemble::load(&spec)?;
        let mut refs = HashMap::new();
        for op in &spec.tta_ops {
            if let HistogramOp::Match { reference } = op {
                if let Some(e) = manifest.get(reference) {
                    refs.insert(reference.clone(), load_image(&manifest, &e.image)?);
                }
            }
        }
        for e in &manifest.entries {
            let img = load_image(&manifest, &e.image)?;
            rows.push(Prediction {
                id: e.id.clone(),
                probability: Some(ensemble.predict(&img, e.fovea, &refs)?),
                ..Default::default()
            });
        }
    } else {
        let model = GanModel::load(&resolve_gan_checkpoint(checkpoint))?;
        let want = config.gan_config().expect("map task").task;
        if model.task() != want {
            return Err(Error::Config(vec![format!(
                "checkpoint was trained for {} but the config task is {want}",
                model.task()
            )]));
        }
        let pp = &config.postprocess;
        create_dir(&out_dir.join("maps"))?;
        if config.task != Task::Fovea {
            create_dir(&out_dir.join("masks"))?;
        }
        for e in &manifest.entries {
            let img = load_image(&manifest, &e.image)?;
            let raw = model.predict(&img)?;
            save_map16(&out_dir.join("maps").join(format!("{}.png", e.id)), &raw)?;
            let (h, w) = raw.dim();
            let mut row = Prediction {
                id: e.id.clone(),
                ..Default::default()
            };
            match config.task {
                Task::Fovea => match extract_fovea(&raw) {
                    Ok(p) => row.fovea = Some(p),
                    Err(Error::NoFoveaSignal) => log::warn!("{}: constant map, no fovea predicted", e.id),
                    Err(err) => return Err(err),
                },
                task => {
                    let (detected, mask) = if task == Task::Od {
                        let min = PostprocessConfig::min_area(pp.od_min_area_fraction, h, w);
                        od_postprocess(&raw, pp.binarize_threshold, min, pp.connectivity)
                    } else {
                        let min = PostprocessConfig::min_area(pp.lesion_min_area_fraction, h, w);
                        lesion_postprocess(&raw, pp.binarize_threshold, min)
                    };
                    let rel = Path::new("masks").join(format!("{}.png", e.id));
                    save_mask(&out_dir.join(&rel), &mask)?;
                    row.detected = Some(detected);
                    row.mask = Some(rel);
                }
            }
            rows.push(row);
        }
    }
    let path = out_dir.join(PREDICTIONS_FILE);
    write_predictions(&path, config.task, &rows)?;
    Ok(path)
}

/// Scores a prediction file against a manifest; artifacts go to `out_dir`.
pub fn cmd_evaluate(config: &RunConfig, predictions: &Path, manifest_path: &Path, out_dir: &Path) -> Result<EvaluationReport> {
    let config = config.clone().validated()?;
    let preds = read_predictions(predictions)?;
    let manifest = load_manifest(manifest_path, Split::Test)?;
    evaluate(config.task, &preds, &manifest, out_dir, &config.evaluation)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |v| format!("{v:.4}"))
}

/// Summarizes a run directory into `summary.md` (returned as well). GAN runs
/// also get `loss_curve.png` from the L1 column of `losses.csv`. Any
/// `report.json` in the directory or one level below is included.
pub fn cmd_report(run_dir: &Path) -> Result<String> {
    let snap_path = run_dir.join(SNAPSHOT_FILE);
    let snap = fs::read_to_string(&snap_path).map_err(|e| Error::io(&snap_path, e))?;
    let config = RunConfig::from_parts(&snap, &[], None)?;
    let mut md = format!("# Run `{}`\n\ntask: {}\nseed: {}\n", run_dir.display(), config.task, config.seed);

    let losses = run_dir.join("losses.csv");
    if losses.exists() {
        let mut r = csv::Reader::from_path(&losses).map_err(|e| Error::Predictions {
            path: losses.clone(),
            message: e.to_string(),
        })?;
        let mut rows: Vec<[f64; 5]> = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(|e| Error::Predictions {
                path: losses.clone(),
                message: e.to_string(),
            })?;
            let mut row = [f64::NAN; 5];
            for (slot, cell) in row.iter_mut().zip(rec.iter()) {
                *slot = cell.parse().unwrap_or(f64::NAN);
            }
            rows.push(row);
        }
        let _ = writeln!(md, "\n## Training\n\nepochs: {}", rows.len());
        if let Some(last) = rows.last() {
            let _ = writeln!(md, "final: d {:.4}, adv {:.4}, l1 {:.4}, val {:.4}", last[1], last[2], last[3], last[4]);
        }
        if let Some(best) = rows.iter().filter(|r| r[4].is_finite()).max_by(|a, b| a[4].total_cmp(&b[4])) {
            let _ = writeln!(md, "best val score {:.4} at epoch {}", best[4], best[0]);
        }
        let l1: Vec<f64> = rows.iter().map(|r| r[3]).collect();
        plot_series(&l1, &run_dir.join("loss_curve.png"))?;
        md.push_str("curve: loss_curve.png\n");
    }

    if run_dir.join(ENSEMBLE_FILE).exists() {
        let spec = load_ensemble_spec(run_dir)?;
        md.push_str("\n## Ensemble\n\n| member | zoom | epoch | accuracy |\n|---|---|---|---|\n");
        for m in &spec.members {
            let ck = ClassifierCheckpoint::load(&m.checkpoint)?;
            let _ = writeln!(md, "| {} | {} | {} | {:.4} |", m.name, m.zoom, ck.epoch, ck.accuracy);
        }
    }

    let mut reports = vec![run_dir.join("report.json")];
    if let Ok(rd) = fs::read_dir(run_dir) {
        let mut subs: Vec<PathBuf> = rd.filter_map(|e| e.ok()).map(|e| e.path().join("report.json")).collect();
        subs.sort();
        reports.extend(subs);
    }
    for p in reports.into_iter().filter(|p| p.is_file()) {
        let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
        let r: EvaluationReport = serde_json::from_str(&text).map_err(|e| Error::Predictions {
            path: p.clone(),
            message: e.to_string(),
        })?;
        let _ = writeln!(
            md,
            "\n## Evaluation ({})\n\nimages: {}\nAUC: {}\nmean Dice: {}\ndetection F1: {}\nmean fovea error: {}\nmissing predictions: {}",
            p.strip_prefix(run_dir).unwrap_or(&p).display(),
            r.n_images,
            fmt_opt(r.auc),
            fmt_opt(r.mean_dice),
            fmt_opt(r.detection_f1),
            fmt_opt(r.mean_fovea_error),
            r.missing_predictions
        );
    }
    write_atomic(&run_dir.join(SUMMARY_FILE), md.as_bytes())?;
    Ok(md)
}
