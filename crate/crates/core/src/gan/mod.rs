//! Adversarial image-to-map translation: generator, discriminator, objectives,
//! training loop and inference.

mod data;
mod infer;
mod loss;
mod net;
mod train;

pub use data::{
    input_planes, make_batch, prepare_manifest, prepare_sample, target_plane, GanSample, GanTask, Letterbox, TargetSpec,
};
pub use infer::{infer, GanModel};
pub use loss::{
    adversarial_loss, combined_generator_objective, discriminator_logit_loss, discriminator_step_loss,
    generator_logit_loss, generator_step_loss, l1_grad, l1_loss, sigmoid, PROB_EPS,
};
pub use net::{Discriminator, DiscriminatorSpec, Generator, GeneratorSpec, DISCRIMINATOR_WIDTHS};
pub use train::{
    generator_objective, train, Checkpoint, EpochLog, GanConfig, GanTrainer, GaussianInit, StepLosses, TrainConfig,
    TrainOutcome, CHECKPOINT_FILE, LOSS_HEADER,
};
