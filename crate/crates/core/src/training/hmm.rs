use rayon::prelude::*;

use crate::conditional::HmmModel;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::models::GmmModel;
use crate::patch::remove_dc_slice;
use crate::scalar::Real;
use crate::training::em::{e_step, renormalize, CenteredData};
use crate::training::{train_gmm, train_gmm_with_mean, TrainConfig, TrainingLog};

/// Pseudo-count added to every transition cell before normalization.
const TRANSITION_SMOOTHING: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct HmmTraining<T> {
    pub model: HmmModel<T>,
    pub intensity_log: TrainingLog,
    /// `None` when a trained disparity mixture was reused.
    pub disparity_log: Option<TrainingLog>,
}

fn responsibilities<T: Real, P: AsRef<[T]>>(model: &GmmModel<T>, xs: &[P]) -> Vec<T> {
    let order: Vec<usize> = (0..xs.len()).collect();
    e_step(&CenteredData::new(xs, &order, model.mean()), model).resp
}

/// Soft-count transition matrix `T[i, k] ∝ Σ_n r_i(c_n) r_k(d_n)`, rows
/// normalized. `pairs` holds raw (intensity, disparity) vectors; intensity
/// DC is removed here.
pub fn estimate_transition<T: Real, P: AsRef<[T]> + Sync>(
    intensity: &GmmModel<T>,
    disparity: &GmmModel<T>,
    pairs: &[(P, P)],
) -> Result<Matrix<T>> {
    if pairs.is_empty() {
        return Err(Error::Empty("training pairs"));
    }
    let dim = intensity.mean().len();
    for (c, d) in pairs {
        if c.as_ref().len() != dim || d.as_ref().len() != disparity.mean().len() {
            return Err(Error::mismatch("pair length does not match the mixtures"));
        }
    }
    let n = pairs.len();
    let cs: Vec<Vec<T>> = pairs.iter().map(|(c, _)| remove_dc_slice(c.as_ref())).collect();
    let ds: Vec<&[T]> = pairs.iter().map(|(_, d)| d.as_ref()).collect();
    let ri = responsibilities(intensity, &cs);
    let rd = responsibilities(disparity, &ds);
    let (ki, kd) = (intensity.k(), disparity.k());
    let prune = T::lit(1e-12);
    let rows: Vec<Vec<T>> = (0..ki)
        .into_par_iter()
        .map(|i| {
            let mut row = vec![T::lit(TRANSITION_SMOOTHING); kd];
            let r = &ri[i * n..(i + 1) * n];
            for (k, cell) in row.iter_mut().enumerate() {
                let rk = &rd[k * n..(k + 1) * n];
                let mut acc = T::zero();
                for (&a, &b) in r.iter().zip(rk) {
                    if a >= prune {
                        acc += a * b;
                    }
                }
                *cell += acc;
            }
            renormalize(&mut row);
            row
        })
        .collect();
    Matrix::from_row_major(ki, kd, rows.concat())
}

/// Trains the intensity mixture on DC-removed intensity patches with a
/// zero mean, trains (or reuses) the disparity mixture, then couples them.
pub fn train_hmm<T: Real, P: AsRef<[T]> + Sync>(
    pairs: &[(P, P)],
    intensity_config: &TrainConfig,
    disparity_config: &TrainConfig,
    reuse_disparity: Option<&GmmModel<T>>,
) -> Result<HmmTraining<T>> {
    if pairs.is_empty() {
        return Err(Error::Empty("training pairs"));
    }
    let len = pairs[0].0.as_ref().len();
    if pairs.iter().any(|(c, d)| c.as_ref().len() != len || d.as_ref().len() != len) {
        return Err(Error::mismatch("intensity and disparity patches must be aligned and equally sized"));
    }
    let cs: Vec<Vec<T>> = pairs.iter().map(|(c, _)| remove_dc_slice(c.as_ref())).collect();
    let (intensity, intensity_log) = train_gmm_with_mean(&cs, &vec![T::zero(); len], intensity_config)?;
    let (disparity, disparity_log) = match reuse_disparity {
        Some(m) => (m.clone(), None),
        None => {
            let ds: Vec<&[T]> = pairs.iter().map(|(_, d)| d.as_ref()).collect();
            let (m, log) = train_gmm(&ds, disparity_config)?;
            (m, Some(log))
        }
    };
    let transition = estimate_transition(&intensity, &disparity, pairs)?;
    Ok(HmmTraining { model: HmmModel::new(intensity, disparity, transition)?, intensity_log, disparity_log })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cov1(v: f64) -> Matrix<f64> {
        Matrix::from_row_major(1, 1, vec![v]).unwrap()
    }

    #[test]
    fn single_intensity_component_gives_disparity_frequencies() {
        // dim 1: DC removal maps every intensity to zero
        let int = GmmModel::new(vec![1.0], vec![0.0], vec![cov1(1.0)]).unwrap();
        let disp = GmmModel::new(vec![0.5, 0.5], vec![0.0], vec![cov1(0.01), cov1(100.0)]).unwrap();
        let pairs: Vec<(Vec<f64>, Vec<f64>)> = (0..200).map(|i| (vec![i as f64], vec![(i % 10) as f64 * 0.01])).collect();
        let t = estimate_transition(&int, &disp, &pairs).unwrap();
        let mut freq = [0.0; 2];
        for (_, d) in &pairs {
            let r = disp.responsibilities(d).unwrap();
            freq[0] += r[0];
            freq[1] += r[1];
        }
        let total = freq[0] + freq[1];
        assert!((t[(0, 0)] - freq[0] / total).abs() < 1e-9);
        assert!((t[(0, 0)] + t[(0, 1)] - 1.0).abs() < 1e-12);
    }
}
