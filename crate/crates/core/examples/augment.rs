//! Training augmentation: the fovea point and OD mask move with the image.

use std::collections::HashMap;

use adam_pipe::preprocess::{augment, sample_rng, AlignedTarget, AugmentationConfig};
use adam_pipe::raster::save_mask;
use adam_pipe::synth::synth_image;

fn main() -> adam_pipe::Result<()> {
    let out = std::path::PathBuf::from("examples-out/augment");
    std::fs::create_dir_all(&out).expect("output dir");
    let s = synth_image(1, 128, 3);
    let config = AugmentationConfig {
        seed: 9,
        ..Default::default()
    };
    let targets = [AlignedTarget::Point(s.fovea), AlignedTarget::Mask(s.od_mask.clone())];
    s.image.save(out.join("original.png")).expect("write png");
    for epoch in 0..4 {
        let mut rng = sample_rng(config.seed, &s.id, epoch);
        let (img, moved) = augment(&s.image, &targets, &config, &HashMap::new(), &mut rng);
        img.save(out.join(format!("epoch{epoch}.png"))).expect("write png");
        if let [AlignedTarget::Point(p), AlignedTarget::Mask(m)] = moved.as_slice() {
            save_mask(&out.join(format!("epoch{epoch}_od.png")), m)?;
            println!("epoch {epoch}: fovea ({:.1}, {:.1}) -> ({:.1}, {:.1}), disc area {}", s.fovea.x, s.fovea.y, p.x, p.y, m.iter().filter(|&&v| v).count());
        }
    }
    println!("images in {}", out.display());
    Ok(())
}
