use crate::conditional::{conditional_log_likelihood_per_pixel, Dl2IntModel};
use crate::error::{Error, Result};
use crate::inference::{degrade_all, map_dl1, psnr, DegradationSpec};
use crate::models::{log_likelihood_per_pixel, Dl1Model, GaussianModel};
use crate::operators::DerivativeOperator;
use crate::patch::PATCH_LEN;
use crate::scalar::Real;

use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HandcraftedKind {
    Dl2,
    Dl1,
    Dl2int,
}

impl std::str::FromStr for HandcraftedKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dl2" => Ok(Self::Dl2),
            "dl1" => Ok(Self::Dl1),
            "dl2int" => Ok(Self::Dl2int),
            other => Err(Error::param(format!("unknown hand-crafted model {other:?} (dl2, dl1, dl2int)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneGrid {
    pub lambdas: Vec<f64>,
    pub epsilons: Vec<f64>,
    /// Only used for DL2|int.
    pub sigmas: Vec<f64>,
    /// Upper bound on held-out patches scored per grid point.
    pub validation_cap: usize,
    /// Noise level (1/255 units) for scoring DL1 by denoising.
    pub dl1_sigma255: f64,
    pub seed: u64,
}

impl Default for TuneGrid {
    fn default() -> Self {
        Self {
            lambdas: vec![1.0, 10.0, 1e2, 1e3, 1e4],
            epsilons: vec![1e-4, 1e-3, 1e-2],
            sigmas: vec![0.01, 0.05, 0.1, 0.2],
            validation_cap: 2000,
            dl1_sigma255: 15.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneResult {
    pub lambda: f64,
    pub epsilon: f64,
    pub sigma: Option<f64>,
    /// Held-out nats per pixel (DL2, DL2|int) or PSNR in dB (DL1).
    pub score: f64,
    /// Every evaluated point as `(λ, ε, σ, score)`.
    pub evaluated: Vec<(f64, f64, Option<f64>, f64)>,
}

fn sorted(values: &[f64], what: &str) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::param(format!("empty {what} grid")));
    }
    if values.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::param(format!("{what} grid values must be positive")));
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    v.dedup();
    Ok(v)
}

/// Every fifth patch, up to `cap` of them.
fn validation_fold(n: usize, cap: usize) -> Vec<usize> {
    (0..n).filter(|i| i % 5 == 4).take(cap.max(1)).collect()
}

/// Grid search for the hand-crafted priors on a held-out fold of the
/// training data. DL2 and DL2|int maximize log-likelihood, DL1 maximizes
/// denoising PSNR. Ties go to the smaller λ, then the smaller ε (then σ).
pub fn tune_handcrafted<T: Real, P: AsRef<[T]> + Sync>(
    kind: HandcraftedKind,
    disparity: &[P],
    intensity: Option<&[P]>,
    grid: &TuneGrid,
) -> Result<TuneResult> {
    let lambdas = sorted(&grid.lambdas, "lambda")?;
    let epsilons = sorted(&grid.epsilons, "epsilon")?;
    let sigmas: Vec<Option<f64>> = match kind {
        HandcraftedKind::Dl2int => sorted(&grid.sigmas, "sigma")?.into_iter().map(Some).collect(),
        _ => vec![None],
    };
    let cap = match kind {
        // IRLS is far costlier per patch than a likelihood
        HandcraftedKind::Dl1 => grid.validation_cap.min(300),
        _ => grid.validation_cap,
    };
    let fold_idx = validation_fold(disparity.len(), cap);
    if fold_idx.is_empty() {
        return Err(Error::param("need at least 5 patches to form a held-out fold"));
    }
    let fold: Vec<&[T]> = fold_idx.iter().map(|&i| disparity[i].as_ref()).collect();
    if fold.iter().any(|d| d.len() != PATCH_LEN) {
        return Err(Error::mismatch("tuning expects 8x8 patches"));
    }
    let pairs: Vec<(&[T], &[T])> = match (kind, intensity) {
        (HandcraftedKind::Dl2int, Some(c)) => {
            if c.len() != disparity.len() {
                return Err(Error::mismatch("intensity and disparity counts differ"));
            }
            fold_idx.iter().map(|&i| (c[i].as_ref(), disparity[i].as_ref())).collect()
        }
        (HandcraftedKind::Dl2int, None) => return Err(Error::param("DL2|int tuning needs intensity patches")),
        _ => Vec::new(),
    };
    let (noisy, spec) = if kind == HandcraftedKind::Dl1 {
        let spec = DegradationSpec::denoise(PATCH_LEN, T::lit(grid.dl1_sigma255 / 255.0))?;
        (degrade_all(&spec, &fold, grid.seed), Some(spec))
    } else {
        (Vec::new(), None)
    };

    let op = DerivativeOperator::patch();
    let mut evaluated = Vec::new();
    let mut best: Option<(f64, f64, Option<f64>, f64)> = None;
    for &lambda in &lambdas {
        for &epsilon in &epsilons {
            for &sigma in &sigmas {
                let (l, e) = (T::lit(lambda), T::lit(epsilon));
                let score = match kind {
                    HandcraftedKind::Dl2 => log_likelihood_per_pixel(&GaussianModel::dl2(&op, l, e)?, &fold)?.as_f64(),
                    HandcraftedKind::Dl2int => {
                        let m = Dl2IntModel::new(op.clone(), l, e, T::lit(sigma.expect("sigma grid")))?;
                        conditional_log_likelihood_per_pixel(&m, &pairs)?.as_f64()
                    }
                    HandcraftedKind::Dl1 => {
                        let m = Dl1Model::new(op.clone(), l, e)?;
                        let spec = spec.as_ref().expect("spec");
                        let est: Vec<Vec<T>> = noisy.par_iter().map(|y| map_dl1(&m, y, spec).map(|r| r.estimate)).collect::<Result<_>>()?;
                        psnr(&est, &fold)?
                    }
                };
                log::debug!("tune {kind:?} lambda={lambda} epsilon={epsilon} sigma={sigma:?}: {score}");
                evaluated.push((lambda, epsilon, sigma, score));
                if score.is_nan() {
                    continue;
                }
                if best.is_none_or(|b| score > b.3) {
                    best = Some((lambda, epsilon, sigma, score));
                }
            }
        }
    }
    let (lambda, epsilon, sigma, score) = best.ok_or_else(|| Error::NonFinite("every grid score"))?;
    Ok(TuneResult { lambda, epsilon, sigma, score, evaluated })
}
