use std::fs;
use std::path::PathBuf;

use clap::Args;
use depthprior::data::{corrupt_image, generate_synthetic_image, write_disparity_png, write_manifest, write_mask, write_scene, Frame, SyntheticImageSpec};
use depthprior::training::DatasetSplit;

use crate::{CmdResult, Failure};

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Dataset root to create.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    #[arg(long, default_value_t = 4)]
    scenes: usize,
    /// How many of the scenes go to the test split (the last ones).
    #[arg(long, default_value_t = 1)]
    test_scenes: usize,
    #[arg(long, default_value_t = 2)]
    frames: usize,
    #[arg(long, default_value_t = 128)]
    width: usize,
    #[arg(long, default_value_t = 128)]
    height: usize,
    #[arg(long, default_value_t = 6)]
    shapes: usize,
    #[arg(long, default_value_t = 3)]
    intensity_shapes: usize,
    /// Probability that a depth outline shows in intensity.
    #[arg(long, default_value_t = 0.8)]
    rho: f64,
    /// Raw disparity represented by PNG level 65535.
    #[arg(long, default_value_t = 64.0)]
    disparity_scale: f64,
    /// Holes per degraded frame.
    #[arg(long, default_value_t = 3)]
    holes: usize,
    #[arg(long, default_value_t = 12)]
    hole_size: usize,
    /// Noise on degraded frames, 1/255 units.
    #[arg(long, default_value_t = 5.0)]
    sigma: f64,
}

/// Writes clean scenes, `manifest.json`, and for every frame a degraded
/// copy (`degraded/`) with its hole mask (`mask/`).
pub fn synth(a: &SynthArgs, seed: u64) -> CmdResult {
    if a.scenes == 0 || a.test_scenes > a.scenes {
        return Err(Failure::Usage("need --scenes >= 1 and --test-scenes <= --scenes".into()));
    }
    if !(0.0..=1.0).contains(&a.rho) || !(a.disparity_scale > 0.0) || !(a.sigma >= 0.0) {
        return Err(Failure::Usage("--rho must lie in [0, 1], --disparity-scale be positive and --sigma nonnegative".into()));
    }
    fs::create_dir_all(&a.out).map_err(|e| Failure::Runtime(format!("{}: {e}", a.out.display())))?;
    let ids: Vec<String> = (0..a.scenes).map(|i| format!("scene_{i:02}")).collect();
    for (s, id) in ids.iter().enumerate() {
        let mut frames = Vec::with_capacity(a.frames);
        for f in 0..a.frames {
            let spec = SyntheticImageSpec {
                width: a.width,
                height: a.height,
                shapes: a.shapes,
                rho: a.rho,
                intensity_shapes: a.intensity_shapes,
                seed: seed.wrapping_mul(1_000_003).wrapping_add((s * 1000 + f) as u64),
                ..SyntheticImageSpec::default()
            };
            let img = generate_synthetic_image::<f64>(&spec)?;
            // store raw disparity so loading exercises normalization
            let mut disparity = img.disparity;
            disparity.values_mut().iter_mut().for_each(|v| *v = (*v * a.disparity_scale).clamp(0.0, a.disparity_scale));
            frames.push(Frame { intensity: img.intensity, disparity });
        }
        write_scene(&a.out, id, &frames, a.disparity_scale)?;
        let (ddir, mdir) = (a.out.join(id).join("degraded"), a.out.join(id).join("mask"));
        for d in [&ddir, &mdir] {
            fs::create_dir_all(d).map_err(|e| Failure::Runtime(format!("{}: {e}", d.display())))?;
        }
        for (f, frame) in frames.iter().enumerate() {
            let sigma = a.sigma / 255.0 * a.disparity_scale;
            let (noisy, mask) = corrupt_image(&frame.disparity, a.holes, a.hole_size, sigma, seed.wrapping_add((s * 1000 + f) as u64))?;
            write_disparity_png(ddir.join(format!("{f:04}.png")), &noisy, a.disparity_scale)?;
            write_mask(mdir.join(format!("{f:04}.png")), &mask)?;
        }
    }
    let split = DatasetSplit::new(ids[..a.scenes - a.test_scenes].to_vec(), ids[a.scenes - a.test_scenes..].to_vec())?;
    write_manifest(&a.out, &split)?;
    Ok(())
}
