//! Prediction files and the `evaluate` report.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{auc, dice, f1_detection, mean_dice, mean_fovea_error, plot_histogram, plot_roc, roc_curve, EmptyDice};
use crate::data::{DatasetManifest, FoveaCoordinate, ManifestEntry, Task};
use crate::raster::{load_mask, Mask};
use crate::{Error, Result};

pub const PREDICTIONS_FILE: &str = "predictions.csv";

/// One predicted row. Which fields are present depends on the task.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Prediction {
    pub id: String,
    pub probability: Option<f64>,
    pub detected: Option<bool>,
    pub fovea: Option<FoveaCoordinate>,
    /// Mask file, relative to the prediction file's directory when written.
    pub mask: Option<PathBuf>,
}

fn header(task: Task) -> &'static [&'static str] {
    match task {
        Task::Classify => &["id", "probability"],
        Task::Od | Task::Lesion(_) => &["id", "detected", "mask"],
        Task::Fovea => &["id", "fovea_x", "fovea_y"],
    }
}

fn pred_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Predictions {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

/// Writes the task's prediction CSV. Probabilities carry 6 decimals; fovea
/// coordinates are written exactly.
pub fn write_predictions(path: &Path, task: Task, rows: &[Prediction]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| pred_err(path, e.to_string()))?;
    let opt = |v: Option<String>| v.unwrap_or_default();
    w.write_record(header(task)).map_err(|e| pred_err(path, e.to_string()))?;
    for r in rows {
        let rec: Vec<String> = match task {
            Task::Classify => vec![r.id.clone(), opt(r.probability.map(|p| format!("{p:.6}")))],
            Task::Od | Task::Lesion(_) => vec![
                r.id.clone(),
                opt(r.detected.map(|d| (d as u8).to_string())),
                opt(r.mask.as_ref().map(|m| m.to_string_lossy().into_owned())),
            ],
            Task::Fovea => vec![
                r.id.clone(),
                opt(r.fovea.map(|f| f.x.to_string())),
                opt(r.fovea.map(|f| f.y.to_string())),
            ],
        };
        w.write_record(&rec).map_err(|e| pred_err(path, e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads any prediction CSV by column name. Mask paths come back resolved
/// against the file's directory.
pub fn read_predictions(path: &Path) -> Result<Vec<Prediction>> {
    let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut r = csv::Reader::from_path(path).map_err(|e| pred_err(path, e.to_string()))?;
    let cols = r.headers().map_err(|e| pred_err(path, e.to_string()))?.clone();
    let col = |name: &str| cols.iter().position(|c| c.trim() == name);
    let id = col("id").ok_or_else(|| pred_err(path, "missing `id` column"))?;
    let (prob, det, fx, fy, mask) = (col("probability"), col("detected"), col("fovea_x"), col("fovea_y"), col("mask"));
    let mut out = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| pred_err(path, e.to_string()))?;
        let cell = |c: Option<usize>| c.and_then(|c| rec.get(c)).map(str::trim).filter(|s| !s.is_empty());
        let num = |c: Option<usize>, what: &str| -> Result<Option<f64>> {
            cell(c)
                .map(|s| s.parse::<f64>().map_err(|_| pred_err(path, format!("line {}: bad {what} `{s}`", line + 2))))
                .transpose()
        };
        let detected = match cell(det) {
            None => None,
            Some("1") | Some("true") => Some(true),
            Some("0") | Some("false") => Some(false),
            Some(s) => return Err(pred_err(path, format!("line {}: bad detected flag `{s}`", line + 2))),
        };
        let fovea = match (num(fx, "fovea_x")?, num(fy, "fovea_y")?) {
            (Some(x), Some(y)) => Some(FoveaCoordinate { x, y }),
            _ => None,
        };
        out.push(Prediction {
            id: rec.get(id).unwrap_or_default().trim().to_string(),
            probability: num(prob, "probability")?,
            detected,
            fovea,
            mask: cell(mask).map(|m| root.join(m)),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvaluationOptions {
    pub empty_dice: EmptyDice,
    /// Fovea penalty for a missing prediction; `None` uses the image diagonal.
    pub fovea_penalty: Option<f64>,
    pub histogram_bins: usize,
}

impl Default for EvaluationOptions {
    fn default() -> Self {
        Self {
            empty_dice: EmptyDice::One,
            fovea_penalty: None,
            histogram_bins: 20,
        }
    }
}

/// Per-image outcome.
#[derive(Debug, Clone, PartialEq)]
pub enum PerImage {
    Classify { id: String, label: bool, probability: f64 },
    Segment { id: String, gt_present: bool, detected: bool, dice: f64 },
    Fovea { id: String, gt: FoveaCoordinate, pred: Option<FoveaCoordinate>, error: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub task: Task,
    pub n_images: usize,
    pub auc: Option<f64>,
    pub mean_dice: Option<f64>,
    pub detection_f1: Option<f64>,
    pub mean_fovea_error: Option<f64>,
    pub missing_predictions: usize,
    pub per_image_csv: String,
    pub plots: Vec<String>,
    #[serde(skip)]
    pub per_image: Vec<PerImage>,
}

fn gt_mask(task: Task, manifest: &DatasetManifest, e: &ManifestEntry) -> Result<Option<Mask>> {
    match task {
        Task::Od => e.od_mask.as_ref().map(|p| load_mask(&manifest.resolve(p))).transpose(),
        Task::Lesion(kind) if !e.lesion_masks.is_empty() => match e.lesion_masks.get(&kind) {
            Some(p) => load_mask(&manifest.resolve(p)).map(Some),
            None => {
                let (w, h) = image::image_dimensions(manifest.resolve(&e.image))
                    .map_err(|err| Error::image(manifest.resolve(&e.image), err))?;
                Ok(Some(Mask::from_elem((h as usize, w as usize), false)))
            }
        },
        _ => Ok(None),
    }
}

/// Scores `predictions` against the manifest and writes `report.json`,
/// `per_image.csv` and plots into `out_dir`. Images without the task's
/// annotation are skipped.
pub fn evaluate(
    task: Task,
    predictions: &[Prediction],
    manifest: &DatasetManifest,
    out_dir: &Path,
    options: &EvaluationOptions,
) -> Result<EvaluationReport> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let by_id: HashMap<&str, &Prediction> = predictions.iter().map(|p| (p.id.as_str(), p)).collect();
    let missing = |id: &str| Error::Predictions {
        path: out_dir.to_path_buf(),
        message: format!("no prediction for `{id}`"),
    };
    let mut per_image = Vec::new();
    let mut n_missing = 0;
    let mut report = EvaluationReport {
        task,
        n_images: 0,
        auc: None,
        mean_dice: None,
        detection_f1: None,
        mean_fovea_error: None,
        missing_predictions: 0,
        per_image_csv: "per_image.csv".into(),
        plots: Vec::new(),
        per_image: Vec::new(),
    };
    let mut csv_rows: Vec<Vec<String>> = Vec::new();
    let csv_header: &[&str];

    match task {
        Task::Classify => {
            csv_header = &["id", "label", "probability"];
            let (mut scores, mut labels) = (Vec::new(), Vec::new());
            for e in &manifest.entries {
                let Some(label) = e.amd else { continue };
                let p = by_id
                    .get(e.id.as_str())
                    .and_then(|p| p.probability)
                    .ok_or_else(|| missing(&e.id))?;
                scores.push(p);
                labels.push(label);
                csv_rows.push(vec![e.id.clone(), (label as u8).to_string(), format!("{p:.6}")]);
                per_image.push(PerImage::Classify {
                    id: e.id.clone(),
                    label,
                    probability: p,
                });
            }
            report.auc = Some(auc(&scores, &labels)?);
            plot_roc(&roc_curve(&scores, &labels)?, &out_dir.join("roc.png"))?;
            report.plots.push("roc.png".into());
        }
        Task::Od | Task::Lesion(_) => {
            csv_header = &["id", "gt_present", "detected", "dice"];
            let (mut dices, mut pred_flags, mut gt_flags) = (Vec::new(), Vec::new(), Vec::new());
            for e in &manifest.entries {
                let Some(gt) = gt_mask(task, manifest, e)? else { continue };
                let p = by_id.get(e.id.as_str()).ok_or_else(|| missing(&e.id))?;
                let pred = match &p.mask {
                    Some(m) => load_mask(m)?,
                    None if p.detected == Some(false) => Mask::from_elem(gt.dim(), false),
                    None => return Err(missing(&e.id)),
                };
                let detected = p.detected.unwrap_or_else(|| pred.iter().any(|&v| v));
                let gt_present = gt.iter().any(|&v| v);
                let d = dice(&pred, &gt)?;
                let both_empty = !gt_present && !pred.iter().any(|&v| v);
                dices.push((d, both_empty));
                pred_flags.push(detected);
                gt_flags.push(gt_present);
                csv_rows.push(vec![
                    e.id.clone(),
                    (gt_present as u8).to_string(),
                    (detected as u8).to_string(),
                    format!("{d:.6}"),
                ]);
                per_image.push(PerImage::Segment {
                    id: e.id.clone(),
                    gt_present,
                    detected,
                    dice: d,
                });
            }
            report.mean_dice = mean_dice(&dices, options.empty_dice);
            report.detection_f1 = Some(f1_detection(&pred_flags, &gt_flags)?);
            let values: Vec<f64> = dices.iter().map(|d| d.0).collect();
            plot_histogram(&values, options.histogram_bins, &out_dir.join("dice_hist.png"))?;
            report.plots.push("dice_hist.png".into());
        }
        Task::Fovea => {
            csv_header = &["id", "gt_x", "gt_y", "pred_x", "pred_y", "error"];
            let mut items = Vec::new();
            for e in &manifest.entries {
                let Some(gt) = e.fovea else { continue };
                let pred = by_id.get(e.id.as_str()).and_then(|p| p.fovea);
                if pred.is_none() {
                    n_missing += 1;
                }
                let (w, h) = image::image_dimensions(manifest.resolve(&e.image))
                    .map_err(|err| Error::image(manifest.resolve(&e.image), err))?;
                let dims = (h as usize, w as usize);
                let error = mean_fovea_error(&[(pred, gt, dims)], options.fovea_penalty);
                items.push((pred, gt, dims));
                let f = |v: Option<f64>| v.map(|v| format!("{v:.3}")).unwrap_or_default();
                csv_rows.push(vec![
                    e.id.clone(),
                    format!("{:.3}", gt.x),
                    format!("{:.3}", gt.y),
                    f(pred.map(|p| p.x)),
                    f(pred.map(|p| p.y)),
                    format!("{error:.6}"),
                ]);
                per_image.push(PerImage::Fovea {
                    id: e.id.clone(),
                    gt,
                    pred,
                    error,
                });
            }
            if items.is_empty() {
                return Err(Error::EmptyDataset);
            }
            report.mean_fovea_error = Some(mean_fovea_error(&items, options.fovea_penalty));
            let errors: Vec<f64> = per_image
                .iter()
                .map(|p| match p {
                    PerImage::Fovea { error, .. } => *error,
                    _ => unreachable!(),
                })
                .collect();
            plot_histogram(&errors, options.histogram_bins, &out_dir.join("error_hist.png"))?;
            report.plots.push("error_hist.png".into());
        }
    }
    if per_image.is_empty() {
        return Err(Error::EmptyDataset);
    }

    let csv_path = out_dir.join("per_image.csv");
    let mut w = csv::Writer::from_path(&csv_path).map_err(|e| pred_err(&csv_path, e.to_string()))?;
    w.write_record(csv_header).map_err(|e| pred_err(&csv_path, e.to_string()))?;
    for r in &csv_rows {
        w.write_record(r).map_err(|e| pred_err(&csv_path, e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(&csv_path, e))?;

    report.n_images = per_image.len();
    report.missing_predictions = n_missing;
    report.per_image = per_image;
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    let json_path = out_dir.join("report.json");
    fs::write(&json_path, json).map_err(|e| Error::io(&json_path, e))?;
    Ok(report)
}
