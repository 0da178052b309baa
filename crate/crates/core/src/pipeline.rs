//! Full-image restoration.
//!
//! Stage 1 restores every overlapping 8x8 patch by HMM posterior mean and
//! averages the overlaps. Stage 2 re-solves each large connected hole as
//! the conditional mean of the image-wide DL2|int Gaussian given every
//! pixel outside the hole, and pastes the result in.

use std::collections::{BTreeMap, VecDeque};

use rayon::prelude::*;

use crate::conditional::{ConditionalDensity, Dl2IntModel, HmmModel};
use crate::error::{Error, Result};
use crate::inference::{hmm_log_prior, DegradationSpec, PreparedMixture};
use crate::linalg::{conjugate_gradient, CsrMatrix};
use crate::operators::{build_dl2int_precision, DerivativeOperator, IntensityWeights, PrecisionMatrix};
use crate::patch::{patch_positions, reassemble_average, Channel, ImageGrid, Patch, PixelMask, PATCH_LEN, PATCH_SIDE};
use crate::scalar::Real;

/// Default minimum hole area routed to stage 2 (one patch).
pub const DEFAULT_HOLE_THRESHOLD: usize = PATCH_LEN;

#[derive(Debug, Clone, PartialEq)]
pub struct RestorationJob<T> {
    pub disparity: ImageGrid<T>,
    /// Already denoised.
    pub intensity: ImageGrid<T>,
    /// `false` marks a hole.
    pub mask: PixelMask,
    /// Noise standard deviation on observed disparity pixels.
    pub noise_sigma: T,
    pub hole_threshold: usize,
}

impl<T: Real> RestorationJob<T> {
    pub fn new(disparity: ImageGrid<T>, intensity: ImageGrid<T>, mask: PixelMask, noise_sigma: T) -> Result<Self> {
        let job = Self { disparity, intensity, mask, noise_sigma, hole_threshold: DEFAULT_HOLE_THRESHOLD };
        job.validate()?;
        Ok(job)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.disparity.same_dims(&self.intensity) || !self.mask.matches(&self.disparity) {
            return Err(Error::mismatch(format!(
                "disparity {}x{}, intensity {}x{}, mask {}x{}",
                self.disparity.width(),
                self.disparity.height(),
                self.intensity.width(),
                self.intensity.height(),
                self.mask.width(),
                self.mask.height()
            )));
        }
        if !(self.noise_sigma >= T::zero()) || !self.noise_sigma.is_finite() {
            return Err(Error::param(format!("noise sigma must be finite and nonnegative, got {}", self.noise_sigma)));
        }
        if self.disparity.width() < PATCH_SIDE || self.disparity.height() < PATCH_SIDE {
            return Err(Error::DimensionTooSmall { width: self.disparity.width(), height: self.disparity.height() });
        }
        Ok(())
    }
}

/// A 4-connected set of hole pixels, as row-major pixel indices in
/// ascending order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HoleComponent {
    pub pixels: Vec<usize>,
    pub large: bool,
}

/// 4-connected components of unobserved pixels, ordered by their first
/// pixel in row-major order; those with area ≥ `threshold` are flagged.
pub fn find_holes(mask: &PixelMask, threshold: usize) -> Vec<HoleComponent> {
    let (w, h) = (mask.width(), mask.height());
    let flags = mask.flags();
    let mut seen = vec![false; w * h];
    let mut out = Vec::new();
    for start in 0..w * h {
        if flags[start] || seen[start] {
            continue;
        }
        let mut pixels = Vec::new();
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(p) = queue.pop_front() {
            pixels.push(p);
            let (x, y) = (p % w, p / w);
            let mut visit = |q: usize| {
                if !flags[q] && !seen[q] {
                    seen[q] = true;
                    queue.push_back(q);
                }
            };
            if x > 0 {
                visit(p - 1);
            }
            if x + 1 < w {
                visit(p + 1);
            }
            if y > 0 {
                visit(p - w);
            }
            if y + 1 < h {
                visit(p + w);
            }
        }
        pixels.sort_unstable();
        let large = pixels.len() >= threshold;
        out.push(HoleComponent { pixels, large });
    }
    out
}

/// The SPD system `Q_HH x_H = b` for unknown pixels `H`.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalSystem<T> {
    pub matrix: CsrMatrix<T>,
    pub rhs: Vec<T>,
    /// Global pixel index of each unknown.
    pub unknowns: Vec<usize>,
}

impl<T: Real> GlobalSystem<T> {
    /// Conditional mean of the zero-mean Gaussian `exp(-xᵀQx)` on
    /// `unknowns` given `values` everywhere else: `Q_HH x_H = -Q_HO x_O`.
    pub fn conditional(q: &CsrMatrix<T>, values: &[T], unknowns: &[usize]) -> Result<Self> {
        if values.len() != q.nrows() {
            return Err(Error::mismatch(format!("{} values for a {}-pixel system", values.len(), q.nrows())));
        }
        if unknowns.iter().any(|&u| u >= values.len()) {
            return Err(Error::param("unknown pixel outside the image"));
        }
        let (matrix, outside) = q.split_principal(unknowns);
        let rhs = outside.iter().map(|row| -row.iter().map(|&(c, v)| v * values[c]).sum::<T>()).collect();
        Ok(Self { matrix, rhs, unknowns: unknowns.to_vec() })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlobalSolution<T> {
    pub values: Vec<T>,
    pub iterations: usize,
    pub relative_residual: T,
    /// False when `max_iters` ran out; `values` is then the best iterate.
    pub converged: bool,
}

pub const DEFAULT_CG_TOL: f64 = 1e-8;

/// Jacobi-preconditioned conjugate gradient on the system.
pub fn solve_global<T: Real>(system: &GlobalSystem<T>, tol: T, max_iters: usize) -> Result<GlobalSolution<T>> {
    if system.rhs.len() != system.matrix.nrows() {
        return Err(Error::mismatch("right-hand side does not match the system"));
    }
    let out = conjugate_gradient(&system.matrix, &system.rhs, None, tol, max_iters);
    if !out.relative_residual.is_finite() {
        return Err(Error::NonFinite("global solve"));
    }
    if out.converged {
        debug_assert!(out.relative_residual <= tol * T::lit(1.0 + 1e-6));
    } else {
        log::warn!("global solve stopped after {} iterations at relative residual {}", out.iterations, out.relative_residual);
    }
    Ok(GlobalSolution { values: out.x, iterations: out.iterations, relative_residual: out.relative_residual, converged: out.converged })
}

/// Image-wide `λ Aᵀ W(c) A + ε I` for intensity image `c`.
pub fn image_precision<T: Real>(model: &Dl2IntModel<T>, intensity: &ImageGrid<T>) -> Result<PrecisionMatrix<T>> {
    let op = DerivativeOperator::new(intensity.width(), intensity.height())?;
    let weights = IntensityWeights::from_intensity(&op, intensity.values(), model.sigma)?;
    build_dl2int_precision(&op, &weights, model.lambda, model.epsilon)
}

fn mask_bits(mask: &PixelMask, x0: usize, y0: usize) -> u64 {
    let mut bits = 0u64;
    for dy in 0..PATCH_SIDE {
        for dx in 0..PATCH_SIDE {
            if mask.is_observed(x0 + dx, y0 + dy) {
                bits |= 1 << (dy * PATCH_SIDE + dx);
            }
        }
    }
    bits
}

/// Stage 1: HMM posterior mean of every stride-1 patch, overlaps averaged.
pub fn restore_patches<T: Real>(job: &RestorationJob<T>, hmm: &HmmModel<T>) -> Result<ImageGrid<T>> {
    job.validate()?;
    if hmm.dim() != PATCH_LEN {
        return Err(Error::mismatch(format!("HMM over {} pixels, expected {PATCH_LEN}", hmm.dim())));
    }
    let (w, h) = (job.disparity.width(), job.disparity.height());
    let positions = patch_positions(w, h, 1)?;
    // group by observation pattern so each pattern is factorized once
    let mut groups: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for (i, &(x, y)) in positions.iter().enumerate() {
        groups.entry(mask_bits(&job.mask, x, y)).or_default().push(i);
    }
    let var = job.noise_sigma * job.noise_sigma;
    let mut restored: Vec<Option<Patch<T>>> = vec![None; positions.len()];
    for (bits, members) in &groups {
        let observed: Vec<bool> = (0..PATCH_LEN).map(|i| bits & (1 << i) != 0).collect();
        let spec = DegradationSpec::new(vec![var; PATCH_LEN], observed)?;
        let prepared = PreparedMixture::for_gmm(hmm.disparity(), &spec)?;
        let out: Vec<Patch<T>> = members
            .par_iter()
            .map(|&i| {
                let (x, y) = positions[i];
                let c = job.intensity.patch_at(x, y);
                let d = job.disparity.patch_at(x, y);
                let post = prepared.posterior(d.values(), &hmm_log_prior(hmm, c.values())?)?;
                Patch::new(&post.bls, Channel::Disparity)
            })
            .collect::<Result<_>>()?;
        for (&i, p) in members.iter().zip(out) {
            restored[i] = Some(p);
        }
    }
    let patches: Vec<Patch<T>> = restored.into_iter().map(|p| p.expect("every position restored")).collect();
    reassemble_average(patches.iter().zip(positions.iter().copied()), w, h, Channel::Disparity)
}

#[derive(Debug, Clone)]
pub struct PipelineOutput<T> {
    pub image: ImageGrid<T>,
    pub stage1: ImageGrid<T>,
    pub holes: Vec<HoleComponent>,
    /// One solve per large hole, in the order of `holes`' large entries.
    pub solves: Vec<GlobalSolution<T>>,
}

/// Two-stage restoration: HMM patch BLS, then global DL2|int inference on
/// large holes.
pub fn restore_image<T: Real>(job: &RestorationJob<T>, hmm: &HmmModel<T>, dl2int: &Dl2IntModel<T>) -> Result<PipelineOutput<T>> {
    let stage1 = restore_patches(job, hmm)?;
    let holes = find_holes(&job.mask, job.hole_threshold);
    let large: Vec<&HoleComponent> = holes.iter().filter(|h| h.large).collect();
    let mut image = stage1.clone();
    let mut solves = Vec::with_capacity(large.len());
    if !large.is_empty() {
        let q = image_precision(dl2int, &job.intensity)?;
        let results: Vec<GlobalSolution<T>> = large
            .par_iter()
            .map(|hole| {
                let system = GlobalSystem::conditional(&q.matrix, stage1.values(), &hole.pixels)?;
                solve_global(&system, T::lit(DEFAULT_CG_TOL), 20 * hole.pixels.len() + 100)
            })
            .collect::<Result<_>>()?;
        for (hole, sol) in large.iter().zip(results) {
            for (&p, &v) in hole.pixels.iter().zip(&sol.values) {
                image.values_mut()[p] = v;
            }
            solves.push(sol);
        }
    }
    Ok(PipelineOutput { image, stage1, holes, solves })
}

/// Baseline: global DL2|int posterior mean of the whole image. With noise,
/// solves `(2Q + D) x = D y` where `D` holds `1/σ²` on observed pixels;
/// without noise, observed pixels are kept and the holes are filled by the
/// conditional mean.
pub fn restore_dl2int_only<T: Real>(job: &RestorationJob<T>, dl2int: &Dl2IntModel<T>) -> Result<ImageGrid<T>> {
    job.validate()?;
    let q = image_precision(dl2int, &job.intensity)?;
    let (w, h) = (job.disparity.width(), job.disparity.height());
    let flags = job.mask.flags();
    let y = job.disparity.values();
    let var = job.noise_sigma * job.noise_sigma;
    let values = if var <= T::lit(crate::inference::NOISE_FLOOR) {
        let hidden: Vec<usize> = (0..w * h).filter(|&i| !flags[i]).collect();
        let mut out = y.to_vec();
        if !hidden.is_empty() {
            let system = GlobalSystem::conditional(&q.matrix, y, &hidden)?;
            let sol = solve_global(&system, T::lit(DEFAULT_CG_TOL), 20 * hidden.len() + 100)?;
            for (&p, &v) in hidden.iter().zip(&sol.values) {
                out[p] = v;
            }
        }
        out
    } else {
        let inv = T::one() / var;
        let two = T::lit(2.0);
        let mut triplets = Vec::with_capacity(q.matrix.nnz() + w * h);
        for r in 0..w * h {
            for (c, v) in q.matrix.row(r) {
                triplets.push((r, c, two * v));
            }
            if flags[r] {
                triplets.push((r, r, inv));
            }
        }
        let matrix = CsrMatrix::from_triplets(w * h, w * h, &triplets)?;
        let rhs: Vec<T> = (0..w * h).map(|i| if flags[i] { inv * y[i] } else { T::zero() }).collect();
        let system = GlobalSystem { matrix, rhs, unknowns: (0..w * h).collect() };
        solve_global(&system, T::lit(DEFAULT_CG_TOL), 20 * w * h + 100)?.values
    };
    ImageGrid::new(w, h, values, Channel::Disparity)
}

/// PSNR of an image against ground truth, over all pixels.
pub fn image_psnr<T: Real>(estimate: &ImageGrid<T>, truth: &ImageGrid<T>) -> Result<f64> {
    if !estimate.same_dims(truth) {
        return Err(Error::mismatch("estimate and ground truth differ in size"));
    }
    crate::inference::psnr(&[estimate.values()], &[truth.values()])
}
