//! Saving and loading every model family through [`TensorFile`].

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::conditional::{Dl2IntModel, HmmModel};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::models::{Dl1Model, GaussianModel, GmmModel, Tensor, TensorFile};
use crate::operators::DerivativeOperator;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Gaussian,
    Gmm,
    Dl2,
    Dl1,
    Dl2int,
    Hmm,
}

/// The `meta` tensor of a model file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub kind: ModelKind,
    /// Pixels per patch.
    pub dim: usize,
    pub lambda: Option<f64>,
    pub epsilon: Option<f64>,
    pub sigma: Option<f64>,
    /// Raw disparity that maps to 1.0 in the training data.
    pub normalization: Option<f64>,
    pub provenance: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SavedModel<T> {
    Gaussian(GaussianModel<T>),
    Gmm(GmmModel<T>),
    /// DL2 is stored by its parameters; [`GaussianModel::dl2`] rebuilds it.
    Dl2 { lambda: T, epsilon: T },
    Dl1(Dl1Model<T>),
    Dl2Int(Dl2IntModel<T>),
    Hmm(HmmModel<T>),
}

impl<T: Real> SavedModel<T> {
    pub fn kind(&self) -> ModelKind {
        match self {
            SavedModel::Gaussian(_) => ModelKind::Gaussian,
            SavedModel::Gmm(_) => ModelKind::Gmm,
            SavedModel::Dl2 { .. } => ModelKind::Dl2,
            SavedModel::Dl1(_) => ModelKind::Dl1,
            SavedModel::Dl2Int(_) => ModelKind::Dl2int,
            SavedModel::Hmm(_) => ModelKind::Hmm,
        }
    }

    fn dim(&self) -> usize {
        use crate::conditional::ConditionalDensity;
        use crate::models::DensityModel;
        match self {
            SavedModel::Gaussian(g) => g.dim(),
            SavedModel::Gmm(g) => g.dim(),
            SavedModel::Dl2 { .. } => crate::patch::PATCH_LEN,
            SavedModel::Dl1(m) => m.operator().pixels(),
            SavedModel::Dl2Int(m) => m.dim(),
            SavedModel::Hmm(m) => m.dim(),
        }
    }

    fn params(&self) -> (Option<f64>, Option<f64>, Option<f64>) {
        match self {
            SavedModel::Dl2 { lambda, epsilon } => (Some(lambda.as_f64()), Some(epsilon.as_f64()), None),
            SavedModel::Dl1(m) => (Some(m.lambda.as_f64()), Some(m.epsilon.as_f64()), None),
            SavedModel::Dl2Int(m) => (Some(m.lambda.as_f64()), Some(m.epsilon.as_f64()), Some(m.sigma.as_f64())),
            _ => (None, None, None),
        }
    }

    pub fn meta(&self, normalization: Option<f64>, provenance: &str) -> ModelMeta {
        let (lambda, epsilon, sigma) = self.params();
        ModelMeta {
            kind: self.kind(),
            dim: self.dim(),
            lambda,
            epsilon,
            sigma,
            normalization,
            provenance: provenance.to_owned(),
        }
    }

    pub fn to_tensor_file(&self, meta: &ModelMeta) -> Result<TensorFile> {
        if meta.kind != self.kind() {
            return Err(Error::param(format!("meta kind {:?} does not match model {:?}", meta.kind, self.kind())));
        }
        let mut file = TensorFile::default();
        match self {
            SavedModel::Gaussian(g) => push_mixture(&mut file, "", &[T::one()], g.mean(), &[g.covariance()]),
            SavedModel::Gmm(g) => push_gmm(&mut file, "", g),
            SavedModel::Hmm(h) => {
                push_gmm(&mut file, "int_", h.intensity());
                push_gmm(&mut file, "disp_", h.disparity());
                let t = h.transition();
                file.push(Tensor::f64("transition", &[t.rows(), t.cols()], to_f64(t.as_slice())));
            }
            SavedModel::Dl2 { .. } | SavedModel::Dl1(_) | SavedModel::Dl2Int(_) => {}
        }
        file.push(Tensor::json("meta", serde_json::to_string(meta)?));
        Ok(file)
    }

    pub fn from_tensor_file(file: &TensorFile) -> Result<(Self, ModelMeta)> {
        let meta: ModelMeta = serde_json::from_str(file.json_tensor("meta")?)?;
        let need = |v: Option<f64>, name: &str| v.map(T::lit).ok_or_else(|| Error::Format(format!("meta lacks {name}")));
        let side = patch_side(meta.dim)?;
        let model = match meta.kind {
            ModelKind::Gaussian => {
                let g = read_gmm::<T>(file, "", meta.dim)?;
                let cov = g.component(0).covariance().clone();
                SavedModel::Gaussian(GaussianModel::new(g.mean().to_vec(), cov)?)
            }
            ModelKind::Gmm => SavedModel::Gmm(read_gmm(file, "", meta.dim)?),
            ModelKind::Hmm => {
                let int = read_gmm::<T>(file, "int_", meta.dim)?;
                let disp = read_gmm::<T>(file, "disp_", meta.dim)?;
                let t = file.f64_tensor("transition", &[int.k(), disp.k()])?;
                let t = Matrix::from_row_major(int.k(), disp.k(), from_f64(t))?;
                SavedModel::Hmm(HmmModel::new(int, disp, t)?)
            }
            ModelKind::Dl2 => SavedModel::Dl2 { lambda: need(meta.lambda, "lambda")?, epsilon: need(meta.epsilon, "epsilon")? },
            ModelKind::Dl1 => SavedModel::Dl1(Dl1Model::new(
                DerivativeOperator::new(side, side)?,
                need(meta.lambda, "lambda")?,
                need(meta.epsilon, "epsilon")?,
            )?),
            ModelKind::Dl2int => SavedModel::Dl2Int(Dl2IntModel::new(
                DerivativeOperator::new(side, side)?,
                need(meta.lambda, "lambda")?,
                need(meta.epsilon, "epsilon")?,
                need(meta.sigma, "sigma")?,
            )?),
        };
        Ok((model, meta))
    }
}

fn patch_side(dim: usize) -> Result<usize> {
    let side = (dim as f64).sqrt().round() as usize;
    if side * side != dim || side < 2 {
        return Err(Error::Format(format!("dimension {dim} is not a square patch")));
    }
    Ok(side)
}

fn to_f64<T: Real>(v: &[T]) -> Vec<f64> {
    v.iter().map(|x| x.as_f64()).collect()
}

fn from_f64<T: Real>(v: &[f64]) -> Vec<T> {
    v.iter().map(|&x| T::lit(x)).collect()
}

fn push_mixture<T: Real>(file: &mut TensorFile, prefix: &str, weights: &[T], mean: &[T], covs: &[&Matrix<T>]) {
    let dim = mean.len();
    file.push(Tensor::f64(&format!("{prefix}pi"), &[weights.len()], to_f64(weights)));
    // the intensity mixture of an HMM is zero-mean and stores no d0
    if prefix != "int_" {
        file.push(Tensor::f64("d0", &[dim], to_f64(mean)));
    }
    let sig: Vec<f64> = covs.iter().flat_map(|c| to_f64(c.as_slice())).collect();
    file.push(Tensor::f64(&format!("{prefix}sigma_k"), &[covs.len(), dim, dim], sig));
}

fn push_gmm<T: Real>(file: &mut TensorFile, prefix: &str, g: &GmmModel<T>) {
    let covs: Vec<&Matrix<T>> = g.components().iter().map(|c| c.covariance()).collect();
    push_mixture(file, prefix, g.weights(), g.mean(), &covs);
}

fn read_gmm<T: Real>(file: &TensorFile, prefix: &str, dim: usize) -> Result<GmmModel<T>> {
    let k = *file.shape(&format!("{prefix}pi"))?.first().ok_or_else(|| Error::Format("empty pi shape".into()))? as usize;
    let pi = from_f64(file.f64_tensor(&format!("{prefix}pi"), &[k])?);
    let mean = if prefix == "int_" { vec![T::zero(); dim] } else { from_f64(file.f64_tensor("d0", &[dim])?) };
    let sig = file.f64_tensor(&format!("{prefix}sigma_k"), &[k, dim, dim])?;
    let covs = sig
        .chunks_exact(dim * dim)
        .map(|c| Matrix::from_row_major(dim, dim, from_f64(c)))
        .collect::<Result<Vec<_>>>()?;
    GmmModel::new(pi, mean, covs)
}

pub fn save_model<T: Real>(path: impl AsRef<Path>, model: &SavedModel<T>, meta: &ModelMeta) -> Result<()> {
    let path = path.as_ref();
    let bytes = model.to_tensor_file(meta)?.to_bytes();
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_model<T: Real>(path: impl AsRef<Path>) -> Result<(SavedModel<T>, ModelMeta)> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    SavedModel::from_tensor_file(&TensorFile::from_bytes(&bytes)?)
}
