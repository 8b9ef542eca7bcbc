//! Trains a small fovea generator on synthetic images and scores held-out ones.
//!
//! Takes about a minute in release mode.

use adam_pipe::data::FoveaCoordinate;
use adam_pipe::distmap::extract_fovea;
use adam_pipe::gan::{prepare_sample, GanConfig, GanModel, GanTask, GanTrainer};
use adam_pipe::preprocess::AugmentationConfig;
use adam_pipe::synth::synth_samples;

fn main() -> adam_pipe::Result<()> {
    env_logger::init();
    let res = 64;
    let all = synth_samples(36, res, 7);
    let (train, held) = all.split_at(28);
    let train: Vec<_> = train.iter().filter_map(|s| prepare_sample(GanTask::Fovea, s, (res, res))).collect();

    let mut config = GanConfig::for_task(GanTask::Fovea);
    config.generator.base_width = 8;
    config.generator.n_special_blocks = 3;
    config.train.resolution = (res, res);
    config.train.batch_size = 14;
    config.train.learning_rate = 2e-3;
    config.train.seed = 1;
    config.augmentation = AugmentationConfig::disabled();

    let mut trainer = GanTrainer::new(config)?;
    for epoch in 0..30 {
        let l = trainer.train_epoch(&train)?;
        if epoch % 5 == 4 {
            println!("epoch {epoch:>2}: d {:.3} adv {:.3} l1 {:.4}", l.d_loss, l.g_adv, l.g_l1);
        }
    }
    let model = GanModel::from_checkpoint(trainer.checkpoint(f64::NAN, ""))?;
    let center = FoveaCoordinate { x: res as f64 / 2.0, y: res as f64 / 2.0 };
    let (mut err, mut base) = (0.0, 0.0);
    for s in held {
        let gt = s.fovea.expect("annotated");
        let p = extract_fovea(&model.predict(&s.image)?)?;
        err += p.distance(&gt);
        base += center.distance(&gt);
    }
    let n = held.len() as f64;
    println!("held-out mean error {:.2} px, image-center baseline {:.2} px", err / n, base / n);
    Ok(())
}
