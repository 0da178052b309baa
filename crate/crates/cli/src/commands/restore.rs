use std::path::{Path, PathBuf};

use clap::Args;
use depthprior::data::{read_disparity, read_mask, read_png_gray, sidecar_path, write_disparity_png, write_pfm, DisparityMeta};
use depthprior::models::SavedModel;
use depthprior::patch::{Channel, ImageGrid, PixelMask};
use depthprior::pipeline::{image_psnr, restore_dl2int_only, restore_image, RestorationJob, DEFAULT_HOLE_THRESHOLD};

use super::LoadedModel;
use crate::{CmdResult, Failure};

#[derive(Args, Debug)]
pub struct RestoreArgs {
    /// Noisy disparity with holes (PNG with scale sidecar, or PFM).
    #[arg(long, value_name = "FILE")]
    disparity: PathBuf,
    /// Denoised intensity image.
    #[arg(long, value_name = "PNG")]
    intensity: PathBuf,
    /// Hole mask, 0 = missing. Without it every pixel counts as observed.
    #[arg(long, value_name = "PNG")]
    mask: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    hmm: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    dl2int: PathBuf,
    /// Disparity noise level in 1/255 units of normalized disparity.
    #[arg(long, default_value_t = 0.0)]
    sigma: f64,
    /// Minimum hole area solved globally.
    #[arg(long, default_value_t = DEFAULT_HOLE_THRESHOLD)]
    hole_threshold: usize,
    /// Skip the patch stage and use the global DL2|int model alone.
    #[arg(long)]
    dl2int_only: bool,
    /// Ground-truth disparity; prints PSNR when given.
    #[arg(long, value_name = "FILE")]
    truth: Option<PathBuf>,
    /// Output (.png with scale sidecar, or .pfm).
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

fn scaled(img: &ImageGrid<f64>, factor: f64) -> ImageGrid<f64> {
    let values = img.values().iter().map(|v| v * factor).collect();
    ImageGrid::new(img.width(), img.height(), values, img.channel()).expect("same size")
}

/// Scale recorded next to a disparity PNG, if any.
fn sidecar_scale(p: &Path) -> Result<Option<f64>, Failure> {
    let side = sidecar_path(p);
    if is_pfm(p) || !side.exists() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(&side).map_err(|e| Failure::Runtime(format!("{}: {e}", side.display())))?;
    let meta: DisparityMeta = serde_json::from_str(&text).map_err(|e| Failure::Runtime(format!("{}: {e}", side.display())))?;
    Ok(Some(meta.scale))
}

fn is_pfm(p: &Path) -> bool {
    p.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case("pfm"))
}

pub fn restore(a: &RestoreArgs) -> CmdResult {
    if !(a.sigma >= 0.0) || !a.sigma.is_finite() {
        return Err(Failure::Usage("--sigma must be finite and nonnegative".into()));
    }
    let loaded = LoadedModel::load(&a.dl2int)?;
    let dl2int_norm = loaded.meta.normalization;
    let dl2int = match loaded.model {
        SavedModel::Dl2Int(m) => m,
        other => return Err(Failure::Runtime(format!("{}: expected a DL2|int model, found {:?}", a.dl2int.display(), other.kind()))),
    };
    let (hmm, norm) = match (&a.hmm, a.dl2int_only) {
        (_, true) => (None, None),
        (Some(p), false) => {
            let loaded = LoadedModel::load(p)?;
            match loaded.model {
                SavedModel::Hmm(m) => (Some(m), loaded.meta.normalization),
                other => return Err(Failure::Runtime(format!("{}: expected an HMM, found {:?}", p.display(), other.kind()))),
            }
        }
        (None, false) => return Err(Failure::Usage("--hmm is required unless --dl2int-only".into())),
    };
    // models trained on synthetic data carry no constant; fall back to the
    // input's own scale
    let norm = match norm.or(dl2int_norm) {
        Some(n) => n,
        None => sidecar_scale(&a.disparity)?.unwrap_or(1.0),
    };
    let disparity = scaled(&read_disparity::<f64>(&a.disparity)?, 1.0 / norm);
    let intensity = read_png_gray::<f64>(&a.intensity, Channel::Intensity)?;
    let mask = match &a.mask {
        Some(p) => read_mask(p)?,
        None => PixelMask::all_observed(disparity.width(), disparity.height()),
    };
    let mut job = RestorationJob::new(disparity, intensity, mask, a.sigma / 255.0)?;
    job.hole_threshold = a.hole_threshold;
    let restored = match &hmm {
        Some(h) => restore_image(&job, h, &dl2int)?.image,
        None => restore_dl2int_only(&job, &dl2int)?,
    };
    let raw = scaled(&restored, norm);
    if is_pfm(&a.out) {
        write_pfm(&a.out, &raw)?;
    } else {
        write_disparity_png(&a.out, &raw, norm)?;
    }
    if let Some(t) = &a.truth {
        let truth = scaled(&read_disparity::<f64>(t)?, 1.0 / norm);
        println!("psnr_db\t{:.4}", image_psnr(&restored, &truth)?);
    }
    Ok(())
}
