//! Challenge scoring: AUC, Dice, detection F1 and fovea distance.

mod plot;
mod report;

pub use plot::{plot_histogram, plot_roc, plot_series};
pub use report::{
    evaluate, read_predictions, write_predictions, EvaluationOptions, EvaluationReport, PerImage, Prediction,
    PREDICTIONS_FILE,
};

use serde::{Deserialize, Serialize};

use crate::data::FoveaCoordinate;
use crate::raster::Mask;
use crate::{Error, Result};

/// Area under the ROC curve via average ranks, equal to the Mann-Whitney
/// statistic `(concordant + ties / 2) / (pos * neg)`.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::shape(&[labels.len()], &[scores.len()]));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidArgument("AUC scores contain NaN".into()));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j+1 share their average
        let avg = (i + j + 2) as f64 / 2.0;
        rank_sum += avg * order[i..=j].iter().filter(|&&k| labels[k]).count() as f64;
        i = j + 1;
    }
    let p = pos as f64;
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * neg as f64))
}

/// ROC points from `(0, 0)` to `(1, 1)`, one per distinct threshold.
pub fn roc_curve(scores: &[f64], labels: &[bool]) -> Result<Vec<(f64, f64)>> {
    auc(scores, labels)?;
    let pos = labels.iter().filter(|&&l| l).count() as f64;
    let neg = labels.len() as f64 - pos;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut pts = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0.0, 0.0);
    for (n, &k) in order.iter().enumerate() {
        if labels[k] {
            tp += 1.0;
        } else {
            fp += 1.0;
        }
        if n + 1 == order.len() || scores[order[n + 1]] != scores[k] {
            pts.push((fp / neg, tp / pos));
        }
    }
    Ok(pts)
}

/// How a pair of empty masks enters a Dice mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmptyDice {
    /// Score 1.0: correct absence is rewarded.
    #[default]
    One,
    /// Leave the image out of the mean.
    Exclude,
}

/// `2|A∩B| / (|A|+|B|)`, with two empty masks scoring 1.0.
pub fn dice(pred: &Mask, gt: &Mask) -> Result<f64> {
    if pred.dim() != gt.dim() {
        return Err(Error::shape(gt.shape(), pred.shape()));
    }
    let (mut inter, mut total) = (0usize, 0usize);
    for (&a, &b) in pred.iter().zip(gt) {
        inter += (a && b) as usize;
        total += a as usize + b as usize;
    }
    Ok(if total == 0 { 1.0 } else { 2.0 * inter as f64 / total as f64 })
}

/// Mean of per-image Dice scores under `convention`; `None` when nothing is left to average.
pub fn mean_dice(scores: &[(f64, bool)], convention: EmptyDice) -> Option<f64> {
    let kept: Vec<f64> = scores
        .iter()
        .filter(|(_, both_empty)| !(convention == EmptyDice::Exclude && *both_empty))
        .map(|(d, _)| *d)
        .collect();
    (!kept.is_empty()).then(|| kept.iter().sum::<f64>() / kept.len() as f64)
}

/// Harmonic mean of precision and recall over detection flags; 0.0 when undefined.
pub fn f1_detection(pred: &[bool], gt: &[bool]) -> Result<f64> {
    if pred.len() != gt.len() {
        return Err(Error::shape(&[gt.len()], &[pred.len()]));
    }
    let (mut tp, mut fp, mut fneg) = (0.0, 0.0, 0.0);
    for (&p, &g) in pred.iter().zip(gt) {
        match (p, g) {
            (true, true) => tp += 1.0,
            (true, false) => fp += 1.0,
            (false, true) => fneg += 1.0,
            _ => {}
        }
    }
    if tp == 0.0 {
        return Ok(0.0);
    }
    let precision = tp / (tp + fp);
    let recall = tp / (tp + fneg);
    Ok(2.0 * precision * recall / (precision + recall))
}

pub fn fovea_error(pred: FoveaCoordinate, gt: FoveaCoordinate) -> f64 {
    pred.distance(&gt)
}

/// Mean Euclidean error. A missing prediction counts as `penalty`, or the
/// image diagonal when `penalty` is `None`. Items are `(pred, gt, (height, width))`.
pub fn mean_fovea_error(items: &[(Option<FoveaCoordinate>, FoveaCoordinate, (usize, usize))], penalty: Option<f64>) -> f64 {
    if items.is_empty() {
        return 0.0;
    }
    let total: f64 = items
        .iter()
        .map(|(p, g, (h, w))| match p {
            Some(p) => fovea_error(*p, *g),
            None => penalty.unwrap_or(((h * h + w * w) as f64).sqrt()),
        })
        .sum();
    total / items.len() as f64
}
