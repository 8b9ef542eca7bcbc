//! AMD classification: toy backbones at two macular zoom levels, combined by
//! the test-time-augmented ensemble mean. Synthetic drusen sit around the
//! fovea and are only a few pixels wide, so the crops are tight; a full-frame
//! member stays near chance at this size.

use std::collections::HashMap;

use adam_pipe::classify::{classifier_samples, default_tta_ops, train_classifier, BackboneSpec, ClassifierConfig, Ensemble, EnsembleMember, EnsembleSpec};
use adam_pipe::metrics::auc;
use adam_pipe::synth::cmd_synth;

fn main() -> adam_pipe::Result<()> {
    let dir = std::path::PathBuf::from("examples-out/classify");
    let train = cmd_synth(24, 192, 1, &dir.join("train"))?;
    let test = cmd_synth(12, 192, 2, &dir.join("test"))?;
    let backbone = BackboneSpec {
        input_resolution: (64, 64),
        ..Default::default()
    };
    let config = ClassifierConfig {
        epochs: 40,
        learning_rate: 3e-3,
        ..Default::default()
    };
    let mut members = Vec::new();
    for zoom in [0.5, 0.35] {
        let ck = train_classifier(&backbone, &config, &classifier_samples(&train, zoom)?, &[])?;
        let path = dir.join(format!("member_z{zoom}"));
        ck.save(&path)?;
        println!("zoom {zoom}: best epoch {}, train accuracy {:.3}", ck.epoch, ck.accuracy);
        members.push(EnsembleMember { name: format!("z{zoom}"), zoom, checkpoint: path });
    }
    let ensemble = Ensemble::load(&EnsembleSpec { members, tta_ops: default_tta_ops() })?;
    let (mut scores, mut labels) = (Vec::new(), Vec::new());
    for e in &test.entries {
        let s = test.load_sample(e)?;
        scores.push(ensemble.predict(&s.image, s.fovea, &HashMap::new())?);
        labels.push(s.amd_label.expect("labelled"));
    }
    println!("test AUC {:.3} over {} images", auc(&scores, &labels)?, scores.len());
    Ok(())
}
