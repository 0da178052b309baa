use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::data::io::{has_extension, image_dimensions, read_disparity, read_png_gray, write_disparity_png, write_png16};
use crate::error::{Error, Result};
use crate::models::seeded_rng;
use crate::patch::{patch_positions, Channel, ImageGrid};
use crate::scalar::Real;
use crate::training::DatasetSplit;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const TRAIN_STRIDE: usize = 4;
pub const TRAIN_PATCH_CAP: usize = 1_000_000;

/// One scene's aligned frames, paired by sorted file name.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SceneRecord {
    pub id: String,
    /// `(intensity, disparity)` paths.
    pub frames: Vec<(PathBuf, PathBuf)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Dataset {
    pub train: Vec<SceneRecord>,
    pub test: Vec<SceneRecord>,
}

fn dataset_err(scene: &str, reason: impl Into<String>) -> Error {
    Error::Dataset { scene: scene.to_string(), reason: reason.into() }
}

fn list_files(dir: &Path, scene: &str, exts: &[&str]) -> Result<Vec<PathBuf>> {
    if !dir.is_dir() {
        return Err(dataset_err(scene, format!("missing channel directory {}", dir.display())));
    }
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|entry| entry.map(|e| e.path()).map_err(|e| Error::io(dir, e)))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .filter(|p| p.is_file() && exts.iter().any(|e| has_extension(p, e)))
        .collect();
    files.sort();
    Ok(files)
}

/// Scans `root/<id>/intensity/*.png` and `root/<id>/disparity/*.png|*.pfm`
/// and checks that each frame pair agrees in size.
pub fn load_scene(root: impl AsRef<Path>, id: &str) -> Result<SceneRecord> {
    let dir = root.as_ref().join(id);
    if !dir.is_dir() {
        return Err(dataset_err(id, format!("no scene directory {}", dir.display())));
    }
    let intensity = list_files(&dir.join("intensity"), id, &["png"])?;
    let disparity = list_files(&dir.join("disparity"), id, &["png", "pfm"])?;
    if intensity.len() != disparity.len() {
        return Err(dataset_err(id, format!("{} intensity frames but {} disparity frames", intensity.len(), disparity.len())));
    }
    let frames: Vec<(PathBuf, PathBuf)> = intensity.into_iter().zip(disparity).collect();
    frames.par_iter().try_for_each(|(c, d)| {
        let (dc, dd) = (image_dimensions(c)?, image_dimensions(d)?);
        if dc != dd {
            return Err(dataset_err(
                id,
                format!("{} is {}x{} but {} is {}x{}", c.display(), dc.0, dc.1, d.display(), dd.0, dd.1),
            ));
        }
        Ok(())
    })?;
    Ok(SceneRecord { id: id.to_string(), frames })
}

pub fn read_manifest(root: impl AsRef<Path>) -> Result<DatasetSplit> {
    let path = root.as_ref().join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let split: DatasetSplit = serde_json::from_str(&text)?;
    split.validate()?;
    Ok(split)
}

pub fn write_manifest(root: impl AsRef<Path>, split: &DatasetSplit) -> Result<()> {
    split.validate()?;
    let path = root.as_ref().join(MANIFEST_FILE);
    fs::write(&path, serde_json::to_string_pretty(split)?).map_err(|e| Error::io(&path, e))
}

/// Loads every scene named by `split`. A root without scene directories
/// yields an empty dataset and a warning.
pub fn load_dataset(root: impl AsRef<Path>, split: &DatasetSplit) -> Result<Dataset> {
    let root = root.as_ref();
    split.validate()?;
    let has_scenes = fs::read_dir(root).map_err(|e| Error::io(root, e))?.filter_map(|e| e.ok()).any(|e| e.path().is_dir());
    if !has_scenes {
        log::warn!("{}: no scene directories, dataset is empty", root.display());
        return Ok(Dataset::default());
    }
    let load = |ids: &[String]| ids.iter().map(|id| load_scene(root, id)).collect::<Result<Vec<_>>>();
    Ok(Dataset { train: load(&split.train)?, test: load(&split.test)? })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame<T> {
    pub intensity: ImageGrid<T>,
    pub disparity: ImageGrid<T>,
}

/// Frames with disparity divided by `normalization`, the maximum
/// disparity over every loaded frame.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedFrames<T> {
    pub frames: Vec<Frame<T>>,
    pub normalization: f64,
}

/// Reads every frame of `scenes` and normalizes disparity to `[0, 1]` by
/// the dataset maximum (or by `normalization` when given, e.g. the
/// training constant applied to test scenes).
pub fn load_frames<T: Real>(scenes: &[SceneRecord], normalization: Option<f64>) -> Result<LoadedFrames<T>> {
    let paths: Vec<(&str, &PathBuf, &PathBuf)> =
        scenes.iter().flat_map(|s| s.frames.iter().map(move |(c, d)| (s.id.as_str(), c, d))).collect();
    let mut frames: Vec<Frame<T>> = paths
        .par_iter()
        .map(|&(id, c, d)| {
            let intensity = read_png_gray::<T>(c, Channel::Intensity)?;
            let disparity = read_disparity::<T>(d)?;
            if !intensity.same_dims(&disparity) {
                return Err(dataset_err(id, format!("{} and {} differ in size", c.display(), d.display())));
            }
            Ok(Frame { intensity, disparity })
        })
        .collect::<Result<_>>()?;
    let scale = match normalization {
        Some(s) => s,
        None => frames.iter().flat_map(|f| f.disparity.values()).map(|v| v.as_f64()).fold(0.0, f64::max),
    };
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::param(format!("disparity normalization must be positive, got {scale}")));
    }
    let inv = T::lit(1.0 / scale);
    for f in &mut frames {
        f.disparity.values_mut().iter_mut().for_each(|v| *v *= inv);
    }
    Ok(LoadedFrames { frames, normalization: scale })
}

/// Writes frames as `root/<id>/{intensity,disparity}/NNNN.png`; disparity
/// is stored with the given scale in its sidecar.
pub fn write_scene<T: Real>(root: impl AsRef<Path>, id: &str, frames: &[Frame<T>], scale: f64) -> Result<SceneRecord> {
    let dir = root.as_ref().join(id);
    let (cdir, ddir) = (dir.join("intensity"), dir.join("disparity"));
    for d in [&cdir, &ddir] {
        fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    let mut out = Vec::with_capacity(frames.len());
    for (i, f) in frames.iter().enumerate() {
        if !f.intensity.same_dims(&f.disparity) {
            return Err(dataset_err(id, format!("frame {i}: intensity and disparity differ in size")));
        }
        let (c, d) = (cdir.join(format!("{i:04}.png")), ddir.join(format!("{i:04}.png")));
        write_png16(&c, &f.intensity)?;
        write_disparity_png(&d, &f.disparity, scale)?;
        out.push((c, d));
    }
    Ok(SceneRecord { id: id.to_string(), frames: out })
}

/// Aligned `(intensity, disparity)` training patches from a stride-4
/// lattice over every frame. Above `cap`, a seeded uniform subset is kept
/// in lattice order.
pub fn sample_training_patches<T: Real>(frames: &[Frame<T>], cap: usize, seed: u64) -> Result<Vec<(Vec<T>, Vec<T>)>> {
    let mut sites = Vec::new();
    for (i, f) in frames.iter().enumerate() {
        for pos in patch_positions(f.disparity.width(), f.disparity.height(), TRAIN_STRIDE)? {
            sites.push((i, pos));
        }
    }
    if sites.len() > cap {
        let mut keep = rand::seq::index::sample(&mut seeded_rng(seed), sites.len(), cap).into_vec();
        keep.sort_unstable();
        sites = keep.into_iter().map(|k| sites[k]).collect();
    }
    Ok(sites
        .into_iter()
        .map(|(i, (x, y))| {
            let f = &frames[i];
            (f.intensity.patch_at(x, y).values().to_vec(), f.disparity.patch_at(x, y).values().to_vec())
        })
        .collect())
}
