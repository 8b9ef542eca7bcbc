//! Fovea distance-map targets and decoding a map back to a point.

use std::path::PathBuf;

use adam_pipe::data::FoveaCoordinate;
use adam_pipe::distmap::{build_target, build_target_with, default_radius, extract_fovea, TargetMode};
use adam_pipe::raster::save_map16;

fn main() -> adam_pipe::Result<()> {
    let out = PathBuf::from("examples-out/distmap");
    std::fs::create_dir_all(&out).expect("output dir");
    let (h, w) = (120, 160);
    let fovea = FoveaCoordinate::new(71.3, 58.8)?;
    let radius = default_radius(h, w, 0.2);

    for (name, mode) in [("ramp", TargetMode::Ramp), ("global", TargetMode::GlobalTruncated)] {
        let target = build_target_with(h, w, fovea, radius, mode)?;
        let back = extract_fovea(&target.values)?;
        save_map16(&out.join(format!("{name}.png")), &target.values)?;
        println!("{name:>6}: peak {:.3}, decoded ({:.2}, {:.2}), error {:.3} px", target.values.fold(0.0f64, |a, &b| a.max(b)), back.x, back.y, back.distance(&fovea));
    }

    // a noisy prediction still decodes near the fovea
    let mut noisy = build_target(h, w, fovea, radius)?.values;
    let mut state = 12345u64;
    noisy.mapv_inplace(|v| {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (v + ((state >> 33) as f64 / (1u64 << 31) as f64 - 0.5) * 0.1).clamp(0.0, 1.0)
    });
    let p = extract_fovea(&noisy)?;
    println!(" noisy: decoded ({:.2}, {:.2}), error {:.3} px", p.x, p.y, p.distance(&fovea));
    Ok(())
}
