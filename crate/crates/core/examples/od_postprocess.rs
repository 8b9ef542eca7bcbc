//! Optic-disc and lesion post-processing on a hand-made raw map.

use ndarray::Array2;

use adam_pipe::metrics::dice;
use adam_pipe::postprocess::{label_components, lesion_postprocess, od_postprocess, Connectivity, PostprocessConfig};

fn disk(h: usize, w: usize, cy: f64, cx: f64, r: f64) -> Array2<bool> {
    Array2::from_shape_fn((h, w), |(y, x)| (y as f64 - cy).powi(2) + (x as f64 - cx).powi(2) <= r * r)
}

fn main() {
    let (h, w) = (96, 96);
    let truth = disk(h, w, 40.0, 60.0, 12.0);
    // the disc with a notch where a vessel crosses it, plus a bright spurious blob
    let raw = Array2::from_shape_fn((h, w), |(y, x)| {
        let notch = (58..62).contains(&x) && y < 44;
        if truth[[y, x]] && !notch {
            0.9
        } else if (y as f64 - 80.0).powi(2) + (x as f64 - 15.0).powi(2) <= 16.0 {
            0.8
        } else {
            0.1
        }
    });
    let pp = PostprocessConfig::default();
    let binary = raw.mapv(|v| v >= pp.binarize_threshold);
    println!("components before: {}", label_components(&binary, Connectivity::Eight).count());
    let min_area = PostprocessConfig::min_area(pp.od_min_area_fraction, h, w);
    let (found, mask) = od_postprocess(&raw, pp.binarize_threshold, min_area, pp.connectivity);
    println!(
        "disc detected {found}; Dice before {:.4}, after {:.4}",
        dice(&binary, &truth).expect("same shape"),
        dice(&mask, &truth).expect("same shape")
    );

    // a lesion map with a single speck below the area floor counts as absent
    let mut speck = Array2::from_elem((h, w), 0.0);
    speck[[10, 10]] = 1.0;
    let min_area = PostprocessConfig::min_area(0.001, h, w);
    let (present, _) = lesion_postprocess(&speck, pp.binarize_threshold, min_area);
    println!("single-pixel lesion with min area {min_area}: detected {present}");
}
