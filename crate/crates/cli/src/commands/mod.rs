use std::fs;
use std::path::{Path, PathBuf};

use depthprior::inference::BenchModel;
use depthprior::models::{load_model, save_model, GaussianModel, ModelMeta, SavedModel};
use depthprior::operators::DerivativeOperator;

use crate::Failure;

mod eval;
mod restore;
mod sample;
mod synth;
mod train;

pub use eval::{eval, EvalCmd};
pub use restore::{restore, RestoreArgs};
pub use sample::{sample, SampleArgs};
pub use synth::{synth, SynthArgs};
pub use train::{train, TrainCmd};

/// A model file plus the Gaussian rebuilt for DL2 files.
pub struct LoadedModel {
    pub name: String,
    pub model: SavedModel<f64>,
    pub meta: ModelMeta,
    dl2: Option<GaussianModel<f64>>,
}

impl LoadedModel {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let (model, meta) = load_model::<f64>(path)?;
        let dl2 = match &model {
            SavedModel::Dl2 { lambda, epsilon } => Some(GaussianModel::dl2(&DerivativeOperator::patch(), *lambda, *epsilon)?),
            _ => None,
        };
        let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| path.display().to_string());
        Ok(Self { name, model, meta, dl2 })
    }

    pub fn bench(&self) -> BenchModel<'_, f64> {
        match &self.model {
            SavedModel::Gaussian(g) => BenchModel::Gaussian(g),
            SavedModel::Dl2 { .. } => BenchModel::Gaussian(self.dl2.as_ref().expect("built on load")),
            SavedModel::Gmm(g) => BenchModel::Gmm(g),
            SavedModel::Dl1(m) => BenchModel::Dl1(m),
            SavedModel::Dl2Int(m) => BenchModel::Dl2Int(m),
            SavedModel::Hmm(m) => BenchModel::Hmm(m),
        }
    }
}

pub fn write_model(path: &Path, model: &SavedModel<f64>, normalization: Option<f64>, provenance: &str) -> Result<(), Failure> {
    save_model(path, model, &model.meta(normalization, provenance))?;
    Ok(())
}

pub fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
}

/// Writes `text` to `path`, or stdout when absent.
pub fn emit(path: Option<&PathBuf>, text: &str) -> Result<(), Failure> {
    match path {
        Some(p) => write_text(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
