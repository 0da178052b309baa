use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;

use crate::conditional::{Dl2IntModel, HmmModel};
use crate::error::{Error, Result};
use crate::inference::{bls_dl2int, hmm_log_prior, map_dl1, psnr, DegradationSpec, Method, PreparedMixture};
use crate::models::{seeded_rng, Dl1Model, GaussianModel, GmmModel};
use crate::patch::PATCH_LEN;
use crate::scalar::Real;

/// A model under evaluation. Gaussian covers DL2 and single-Gaussian fits.
#[derive(Debug, Clone, Copy)]
pub enum BenchModel<'a, T> {
    Identity,
    Gaussian(&'a GaussianModel<T>),
    Gmm(&'a GmmModel<T>),
    Dl1(&'a Dl1Model<T>),
    Dl2Int(&'a Dl2IntModel<T>),
    Hmm(&'a HmmModel<T>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Task {
    /// Noise standard deviation in units of 1/255.
    Denoise { sigma255: f64 },
    /// Only the corner pixels are visible.
    Inpaint,
}

impl Task {
    pub fn label(&self) -> String {
        match self {
            Task::Denoise { sigma255 } => format!("denoise-σ{sigma255}"),
            Task::Inpaint => "inpaint".to_string(),
        }
    }

    pub fn spec<T: Real>(&self) -> Result<DegradationSpec<T>> {
        match self {
            Task::Denoise { sigma255 } => DegradationSpec::denoise(PATCH_LEN, T::lit(sigma255 / 255.0)),
            Task::Inpaint => Ok(DegradationSpec::corner_inpaint()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkRow {
    pub model: String,
    pub task: String,
    pub method: Method,
    pub psnr: f64,
    pub count: usize,
    pub wall_seconds: f64,
}

/// Degrades every clean patch with one seeded noise stream, in order.
pub fn degrade_all<T: Real, P: AsRef<[T]>>(spec: &DegradationSpec<T>, clean: &[P], seed: u64) -> Vec<Vec<T>> {
    let mut rng = seeded_rng(seed);
    clean.iter().map(|d| spec.degrade(d.as_ref(), &mut rng)).collect()
}

fn passthrough<T: Real>(y: &[T], spec: &DegradationSpec<T>) -> Vec<T> {
    let obs = spec.observed_indices();
    let fill = if obs.is_empty() { T::zero() } else { obs.iter().map(|&i| y[i]).sum::<T>() / T::lit(obs.len() as f64) };
    (0..y.len()).map(|i| if spec.observed()[i] { y[i] } else { fill }).collect()
}

/// Restores every observation; returns one estimate list per method the
/// model supports (BLS and MAP for mixtures).
pub fn restore_batch<T: Real, C: AsRef<[T]> + Sync>(
    model: &BenchModel<'_, T>,
    spec: &DegradationSpec<T>,
    intensities: &[C],
    noisy: &[Vec<T>],
) -> Result<Vec<(Method, Vec<Vec<T>>)>> {
    let needs_intensity = matches!(model, BenchModel::Dl2Int(_) | BenchModel::Hmm(_));
    if needs_intensity && intensities.len() != noisy.len() {
        return Err(Error::mismatch(format!("{} intensity patches for {} observations", intensities.len(), noisy.len())));
    }
    let mixture = |prepared: &PreparedMixture<T>, prior: &(dyn Fn(usize) -> Result<Vec<T>> + Sync)| -> Result<Vec<(Method, Vec<Vec<T>>)>> {
        let posts: Vec<_> = noisy.par_iter().enumerate().map(|(i, y)| prepared.posterior(y, &prior(i)?)).collect::<Result<_>>()?;
        let (bls, map): (Vec<_>, Vec<_>) = posts.into_iter().map(|p| (p.bls, p.map)).unzip();
        Ok(vec![(Method::Bls, bls), (Method::Map, map)])
    };
    match model {
        BenchModel::Identity => Ok(vec![(Method::Passthrough, noisy.iter().map(|y| passthrough(y, spec)).collect())]),
        BenchModel::Gaussian(g) => {
            let prepared = PreparedMixture::for_gaussian(g, spec)?;
            let est: Vec<Vec<T>> = noisy.par_iter().map(|y| prepared.posterior(y, &[T::zero()]).map(|p| p.bls)).collect::<Result<_>>()?;
            Ok(vec![(Method::Bls, est)])
        }
        BenchModel::Gmm(g) => {
            let prepared = PreparedMixture::for_gmm(g, spec)?;
            mixture(&prepared, &|_| Ok(g.log_weights().to_vec()))
        }
        BenchModel::Hmm(h) => {
            let prepared = PreparedMixture::for_gmm(h.disparity(), spec)?;
            mixture(&prepared, &|i| hmm_log_prior(h, intensities[i].as_ref()))
        }
        BenchModel::Dl1(m) => {
            let est: Vec<Vec<T>> = noisy.par_iter().map(|y| map_dl1(m, y, spec).map(|r| r.estimate)).collect::<Result<_>>()?;
            Ok(vec![(Method::Map, est)])
        }
        BenchModel::Dl2Int(m) => {
            let est: Vec<Vec<T>> = noisy
                .par_iter()
                .enumerate()
                .map(|(i, y)| bls_dl2int(m, intensities[i].as_ref(), y, spec).map(|r| r.estimate))
                .collect::<Result<_>>()?;
            Ok(vec![(Method::Bls, est)])
        }
    }
}

/// Restores `pairs` (intensity, clean disparity) under `task` and scores
/// each method by PSNR. Noise is drawn from `seed`, so every model sees the
/// same observations.
pub fn benchmark_rows<T: Real, P: AsRef<[T]> + Sync>(
    name: &str,
    model: &BenchModel<'_, T>,
    task: Task,
    pairs: &[(P, P)],
    seed: u64,
) -> Result<Vec<BenchmarkRow>> {
    let start = Instant::now();
    let spec = task.spec::<T>()?;
    let clean: Vec<&[T]> = pairs.iter().map(|(_, d)| d.as_ref()).collect();
    let intensities: Vec<&[T]> = pairs.iter().map(|(c, _)| c.as_ref()).collect();
    let noisy = degrade_all(&spec, &clean, seed);
    let results = restore_batch(model, &spec, &intensities, &noisy)?;
    let wall = start.elapsed().as_secs_f64();
    results
        .into_iter()
        .map(|(method, est)| {
            Ok(BenchmarkRow { model: name.to_string(), task: task.label(), method, psnr: psnr(&est, &clean)?, count: pairs.len(), wall_seconds: wall })
        })
        .collect()
}

/// Tab-separated table: model, task, method, PSNR dB, patch count and,
/// with `timings`, wall time.
pub fn benchmark_tsv(rows: &[BenchmarkRow], timings: bool) -> String {
    let mut out = String::from("model\ttask\tmethod\tpsnr_db\tcount");
    out.push_str(if timings { "\twall_s\n" } else { "\n" });
    for r in rows {
        let _ = write!(out, "{}\t{}\t{}\t{:.4}\t{}", r.model, r.task, r.method, r.psnr, r.count);
        let _ = if timings { writeln!(out, "\t{:.3}", r.wall_seconds) } else { writeln!(out) };
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_denoise_is_noise_floor() {
        let pairs: Vec<(Vec<f64>, Vec<f64>)> = (0..2000).map(|i| (vec![0.0; 64], vec![(i % 10) as f64 / 10.0; 64])).collect();
        let rows = benchmark_rows("identity", &BenchModel::Identity, Task::Denoise { sigma255: 15.0 }, &pairs, 4).unwrap();
        let expect = 10.0 * (255.0f64 / 15.0).powi(2).log10();
        assert_eq!(rows.len(), 1);
        assert!((rows[0].psnr - expect).abs() < 0.1, "{} vs {}", rows[0].psnr, expect);
        assert!(benchmark_tsv(&rows, false).contains("identity\tdenoise-σ15\tNONE"));
    }
}
