//! Unconditional density models over disparity patches.

mod container;
mod dl1;
mod file;
mod gaussian;
mod gmm;

pub use container::{Tensor, TensorData, TensorFile, MAGIC};
pub use dl1::Dl1Model;
pub use file::{load_model, save_model, ModelKind, ModelMeta, SavedModel};
pub use gaussian::{CovarianceFactor, GaussianModel};
pub use gmm::GmmModel;

use rand::SeedableRng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::patch::{Channel, Patch};
use crate::scalar::Real;

/// Random number generator used for every seeded operation.
pub type SeededRng = rand_chacha::ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> SeededRng {
    SeededRng::seed_from_u64(seed)
}

/// A normalized density with closed-form sampling.
pub trait DensityModel<T: Real>: Sync {
    fn dim(&self) -> usize;

    /// Log-density in nats.
    fn log_density(&self, x: &[T]) -> Result<T>;

    fn sample_with(&self, rng: &mut SeededRng) -> Vec<T>;
}

pub fn log_likelihood<T: Real, M: DensityModel<T> + ?Sized>(model: &M, patch: &Patch<T>) -> Result<T> {
    model.log_density(patch.values())
}

/// Mean log-likelihood per pixel (nats) over a test set.
pub fn log_likelihood_per_pixel<T, M, P>(model: &M, patches: &[P]) -> Result<T>
where
    T: Real,
    M: DensityModel<T> + ?Sized,
    P: AsRef<[T]> + Sync,
{
    if patches.is_empty() {
        return Err(Error::Empty("test set"));
    }
    let per_patch: Vec<T> = patches.par_iter().map(|p| model.log_density(p.as_ref())).collect::<Result<_>>()?;
    let total: T = per_patch.into_iter().sum();
    Ok(total / T::lit((patches.len() * model.dim()) as f64))
}

/// Draws one patch; identical seeds give identical patches.
pub fn sample<T: Real, M: DensityModel<T> + ?Sized>(model: &M, seed: u64) -> Result<Patch<T>> {
    let mut rng = seeded_rng(seed);
    Patch::new(&model.sample_with(&mut rng), Channel::Disparity)
}

pub(crate) fn check_finite<T: Real>(x: &[T], what: &'static str) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

pub(crate) fn standard_normals<T: Real>(rng: &mut SeededRng, n: usize) -> Vec<T> {
    use rand_distr::{Distribution, StandardNormal};
    (0..n).map(|_| T::lit(StandardNormal.sample(rng))).collect()
}

pub(crate) use gmm::validate_simplex as gmm_validate_simplex;
