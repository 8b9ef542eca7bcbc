//! Run configs: TOML with dotted overrides, validation and the full snapshot.

use adam_pipe::config::RunConfig;

fn main() {
    let text = r#"
task = "od"
seed = 3
output_dir = "runs/od-small"

[data]
train = "data/train/manifest.csv"

[gan.train]
epochs = 40
resolution = [64, 64]
"#;
    let overrides = vec!["gan.generator.base_width=8".to_string(), "postprocess.binarize_threshold=0.4".into()];
    let config = RunConfig::from_parts(text, &overrides, None).expect("parses");
    println!("generator {:?}", config.gan.generator);
    println!("--- snapshot ---\n{}", config.snapshot().expect("serializes"));

    let broken = RunConfig::from_parts(text, &["gan.train.batch_size=0".into(), "gan.augmentation.flip_probability=2".into()], None)
        .expect("parses");
    for e in broken.validate() {
        println!("invalid: {e}");
    }
}
