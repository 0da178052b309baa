use std::path::PathBuf;

use clap::Args;
use depthprior::conditional::ConditionalDensity;
use depthprior::data::{read_png_gray, write_png16};
use depthprior::inference::BenchModel;
use depthprior::models::{seeded_rng, DensityModel, SavedModel};
use depthprior::patch::{remove_dc_slice, Channel, ImageGrid, PATCH_SIDE};

use super::LoadedModel;
use crate::{CmdResult, Failure};

#[derive(Args, Debug)]
pub struct SampleArgs {
    #[arg(long, value_name = "FILE")]
    model: PathBuf,
    #[arg(long, default_value_t = 64, value_parser = clap::value_parser!(u64).range(1..))]
    n: u64,
    /// Intensity image to condition on (DL2|int, HMM); its 8x8 patch at
    /// --at is used.
    #[arg(long, value_name = "PNG")]
    condition: Option<PathBuf>,
    /// Top-left corner of the conditioning patch.
    #[arg(long, default_value = "0,0", value_parser = parse_xy)]
    at: (usize, usize),
    /// Draw every tile from mixture component k.
    #[arg(long)]
    component: Option<usize>,
    /// Subtract each tile's mean before display.
    #[arg(long)]
    remove_dc: bool,
    #[arg(long, value_name = "PNG")]
    out: PathBuf,
}

fn parse_xy(s: &str) -> Result<(usize, usize), String> {
    let (x, y) = s.split_once(',').ok_or("expected x,y")?;
    Ok((x.trim().parse().map_err(|_| "bad x")?, y.trim().parse().map_err(|_| "bad y")?))
}

/// Tiles on a square grid with a one-pixel gap, rescaled to [0, 1].
fn mosaic(tiles: &[Vec<f64>]) -> ImageGrid<f64> {
    let cols = (tiles.len() as f64).sqrt().ceil() as usize;
    let rows = tiles.len().div_ceil(cols);
    let step = PATCH_SIDE + 1;
    let (w, h) = (cols * step + 1, rows * step + 1);
    let lo = tiles.iter().flatten().copied().fold(f64::INFINITY, f64::min);
    let hi = tiles.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut img = ImageGrid::filled(w, h, 1.0, Channel::Disparity);
    for (i, t) in tiles.iter().enumerate() {
        let (x0, y0) = ((i % cols) * step + 1, (i / cols) * step + 1);
        for y in 0..PATCH_SIDE {
            for x in 0..PATCH_SIDE {
                img.set(x0 + x, y0 + y, (t[y * PATCH_SIDE + x] - lo) / span);
            }
        }
    }
    img
}

pub fn sample(a: &SampleArgs, seed: u64) -> CmdResult {
    let loaded = LoadedModel::load(&a.model)?;
    let condition = match &a.condition {
        Some(p) => {
            let img = read_png_gray::<f64>(p, Channel::Intensity)?;
            let (x, y) = a.at;
            if x + PATCH_SIDE > img.width() || y + PATCH_SIDE > img.height() {
                return Err(Failure::Usage(format!("--at {x},{y} leaves the {}x{} image", img.width(), img.height())));
            }
            Some(img.patch_at(x, y).values().to_vec())
        }
        None => None,
    };
    if a.component.is_some() && !matches!(loaded.model, SavedModel::Gmm(_) | SavedModel::Hmm(_)) {
        return Err(Failure::Usage("--component needs a GMM or HMM".into()));
    }
    let mut rng = seeded_rng(seed);
    let n = a.n as usize;
    let check_k = |k: usize, count: usize| {
        if k < count {
            Ok(k)
        } else {
            Err(Failure::Usage(format!("--component {k} but the model has {count} components")))
        }
    };
    let mut tiles: Vec<Vec<f64>> = Vec::with_capacity(n);
    match (&loaded.model, &condition) {
        (SavedModel::Dl2Int(m), Some(c)) => {
            for _ in 0..n {
                tiles.push(m.conditional_sample(c, &mut rng)?);
            }
        }
        (SavedModel::Hmm(m), c) => match (a.component, c) {
            (Some(k), _) => {
                let k = check_k(k, m.disparity().k())?;
                tiles.extend((0..n).map(|_| m.disparity().sample_component(k, &mut rng)));
            }
            (None, Some(c)) => {
                for _ in 0..n {
                    tiles.push(m.conditional_sample(c, &mut rng)?);
                }
            }
            (None, None) => {
                let g = m.disparity().with_weights(m.marginal_disparity_weights())?;
                tiles.extend((0..n).map(|_| g.sample_with(&mut rng)));
            }
        },
        (SavedModel::Dl2Int(_), None) => return Err(Failure::Usage("DL2|int samples need --condition".into())),
        (_, Some(_)) => return Err(Failure::Runtime(format!("{:?} is unconditional; drop --condition", loaded.meta.kind))),
        (SavedModel::Gmm(g), None) => match a.component {
            Some(k) => {
                let k = check_k(k, g.k())?;
                tiles.extend((0..n).map(|_| g.sample_component(k, &mut rng)));
            }
            None => tiles.extend((0..n).map(|_| g.sample_with(&mut rng))),
        },
        (SavedModel::Gaussian(_) | SavedModel::Dl2 { .. }, None) => {
            let BenchModel::Gaussian(g) = loaded.bench() else { unreachable!("gaussian-family model") };
            tiles.extend((0..n).map(|_| g.sample_with(&mut rng)));
        }
        (SavedModel::Dl1(_), None) => return Err(Failure::Runtime("DL1 has no exact sampler".into())),
    }
    if a.remove_dc {
        tiles = tiles.iter().map(|t| remove_dc_slice(t)).collect();
    }
    write_png16(&a.out, &mosaic(&tiles))?;
    Ok(())
}
