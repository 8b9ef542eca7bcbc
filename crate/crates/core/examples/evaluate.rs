//! Scoring prediction files: fovea points jittered off the truth, and the
//! ground-truth disc masks as perfect segmentations.

use adam_pipe::data::{FoveaCoordinate, Task};
use adam_pipe::metrics::{evaluate, read_predictions, write_predictions, EvaluationOptions, Prediction, PREDICTIONS_FILE};
use adam_pipe::synth::cmd_synth;

fn main() -> adam_pipe::Result<()> {
    let dir = std::path::PathBuf::from("examples-out/evaluate");
    let manifest = cmd_synth(10, 64, 4, &dir.join("data"))?;

    let fovea: Vec<Prediction> = manifest
        .entries
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let f = e.fovea.expect("annotated");
            Prediction {
                id: e.id.clone(),
                // one image left unpredicted to show the penalty
                fovea: (i != 0).then(|| FoveaCoordinate { x: f.x + 3.0, y: f.y - 4.0 }),
                ..Default::default()
            }
        })
        .collect();
    let path = dir.join("fovea").join(PREDICTIONS_FILE);
    std::fs::create_dir_all(path.parent().expect("has parent")).expect("output dir");
    write_predictions(&path, Task::Fovea, &fovea)?;
    let r = evaluate(Task::Fovea, &read_predictions(&path)?, &manifest, &dir.join("fovea"), &EvaluationOptions::default())?;
    println!("fovea: mean error {:.3} px with {} missing (9 at 5 px, 1 at the 90.5 px diagonal)", r.mean_fovea_error.unwrap_or(f64::NAN), r.missing_predictions);

    let od: Vec<Prediction> = manifest
        .entries
        .iter()
        .map(|e| Prediction {
            id: e.id.clone(),
            detected: Some(true),
            mask: e.od_mask.as_ref().map(|m| manifest.resolve(m)),
            ..Default::default()
        })
        .collect();
    let r = evaluate(Task::Od, &od, &manifest, &dir.join("od"), &EvaluationOptions::default())?;
    println!("od: Dice {:?}, detection F1 {:?}, plots {:?}", r.mean_dice, r.detection_f1, r.plots);
    Ok(())
}
