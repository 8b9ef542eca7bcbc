//! Writes a small synthetic fundus set and reads its manifest back.
//!
//! cargo run --release --example synth_dataset -- [out_dir]

use std::path::PathBuf;

use adam_pipe::data::{load_manifest, Split};
use adam_pipe::synth::cmd_synth;

fn main() -> adam_pipe::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| "examples-out/synth".into());
    let written = cmd_synth(16, 128, 0, &out)?;
    let manifest = load_manifest(&out.join("manifest.csv"), Split::Train)?;
    assert_eq!(written.len(), manifest.len());
    let counts = manifest.class_counts();
    println!("{} images in {}: {} amd, {} non-amd", manifest.len(), out.display(), counts.amd, counts.non_amd);
    let first = manifest.load_sample(&manifest.entries[1])?;
    let fovea = first.fovea.expect("synthetic images are annotated");
    println!(
        "{}: {}x{}, fovea ({:.1}, {:.1}), lesion kinds {:?}",
        first.id,
        first.width(),
        first.height(),
        fovea.x,
        fovea.y,
        first.lesion_masks.as_ref().map(|m| m.keys().map(|k| k.name()).collect::<Vec<_>>())
    );
    Ok(())
}
