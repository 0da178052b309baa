//! Patch restoration (denoising and inpainting) by Bayes least squares and
//! MAP under every model family.

mod benchmark;
mod degradation;
mod dl1;
mod posterior;

pub use benchmark::{benchmark_rows, benchmark_tsv, degrade_all, restore_batch, BenchModel, BenchmarkRow, Task};
pub use degradation::{DegradationSpec, CORNER_PIXELS, NOISE_FLOOR};
pub use dl1::{map_dl1, map_dl1_with, IrlsOptions};
pub use posterior::{bls_dl2int, bls_gaussian, bls_gmm, bls_hmm, map_gmm, map_hmm, MixturePosterior, PreparedMixture};

pub(crate) use posterior::hmm_log_prior;

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Bls,
    Map,
    /// The observation itself, for noise-floor baselines.
    Passthrough,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::Bls => "BLS",
            Method::Map => "MAP",
            Method::Passthrough => "NONE",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RestorationResult<T> {
    pub estimate: Vec<T>,
    /// Posterior component weights, for mixture models.
    pub posterior_weights: Option<Vec<T>>,
    pub method: Method,
    /// False when an iterative solver stopped at its iteration cap.
    pub converged: bool,
}

/// `10 log10(1 / L)` with `L` the mean per-pixel squared error over all
/// patches. Perfect estimates give `+∞`.
pub fn psnr<T: Real, P: AsRef<[T]>, Q: AsRef<[T]>>(estimates: &[P], truths: &[Q]) -> Result<f64> {
    if estimates.is_empty() {
        return Err(Error::Empty("restored patches"));
    }
    if estimates.len() != truths.len() {
        return Err(Error::mismatch(format!("{} estimates for {} ground truths", estimates.len(), truths.len())));
    }
    let mut total = 0.0;
    for (e, t) in estimates.iter().zip(truths) {
        let (e, t) = (e.as_ref(), t.as_ref());
        if e.len() != t.len() || e.is_empty() {
            return Err(Error::mismatch("estimate and ground truth differ in size"));
        }
        let se: f64 = e.iter().zip(t).map(|(&a, &b)| (a.as_f64() - b.as_f64()).powi(2)).sum();
        total += se / e.len() as f64;
    }
    let loss = total / estimates.len() as f64;
    Ok(if loss == 0.0 { f64::INFINITY } else { -10.0 * loss.log10() })
}
