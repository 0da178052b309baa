use std::time::Instant;

use rand::seq::index::sample as sample_indices;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::models::{check_finite, seeded_rng, CovarianceFactor, GmmModel};
use crate::scalar::{dot, log_sum_exp, Real};
use crate::training::init::{initial_model, split_model};
use crate::training::{IterRecord, TrainConfig, TrainingLog};

pub(crate) const BLOCK: usize = 256;

/// Responsibilities below this are dropped from the covariance scatter.
const PRUNE: f64 = 1e-12;

/// Patches centered about a fixed mean, stored dimension-major in blocks of
/// `BLOCK` columns (`blocks[b][i * BLOCK + j]` is coordinate `i` of patch
/// `b * BLOCK + j`). The last block is zero-padded.
#[derive(Debug, Clone)]
pub(crate) struct CenteredData<T> {
    pub dim: usize,
    pub n: usize,
    pub mean: Vec<T>,
    blocks: Vec<Vec<T>>,
}

impl<T: Real> CenteredData<T> {
    pub fn new<P: AsRef<[T]>>(patches: &[P], order: &[usize], mean: &[T]) -> Self {
        let dim = mean.len();
        let n = order.len();
        let mut blocks = Vec::with_capacity(n.div_ceil(BLOCK));
        for chunk in order.chunks(BLOCK) {
            let mut block = vec![T::zero(); dim * BLOCK];
            for (j, &idx) in chunk.iter().enumerate() {
                for (i, (&v, &m)) in patches[idx].as_ref().iter().zip(mean).enumerate() {
                    block[i * BLOCK + j] = v - m;
                }
            }
            blocks.push(block);
        }
        Self { dim, n, mean: mean.to_vec(), blocks }
    }

    #[inline]
    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    #[inline]
    pub fn block_len(&self, b: usize) -> usize {
        (self.n - b * BLOCK).min(BLOCK)
    }

    /// Centered patch `idx`.
    pub fn column(&self, idx: usize) -> Vec<T> {
        let (b, j) = (idx / BLOCK, idx % BLOCK);
        (0..self.dim).map(|i| self.blocks[b][i * BLOCK + j]).collect()
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        let cols: Vec<Vec<T>> = indices.iter().map(|&i| self.column(i)).collect();
        let zero = vec![T::zero(); self.dim];
        let order: Vec<usize> = (0..cols.len()).collect();
        Self { mean: self.mean.clone(), ..Self::new(&cols, &order, &zero) }
    }

    /// Writes the centered patches `indices` into `out` dimension-major with
    /// row stride `indices.len()`.
    fn gather_into(&self, indices: &[usize], out: &mut [T]) {
        let w = indices.len();
        for (j, &idx) in indices.iter().enumerate() {
            let (b, c) = (idx / BLOCK, idx % BLOCK);
            let block = &self.blocks[b];
            for i in 0..self.dim {
                out[i * w + j] = block[i * BLOCK + c];
            }
        }
    }
}

/// Order patches lexicographically so training does not depend on the
/// order of its input.
pub(crate) fn canonical_order<T: Real, P: AsRef<[T]>>(patches: &[P]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..patches.len()).collect();
    order.sort_by(|&a, &b| {
        let (pa, pb) = (patches[a].as_ref(), patches[b].as_ref());
        for (x, y) in pa.iter().zip(pb) {
            match x.partial_cmp(y) {
                Some(std::cmp::Ordering::Equal) | None => continue,
                Some(o) => return o,
            }
        }
        a.cmp(&b)
    });
    order
}

pub(crate) struct EStep<T> {
    pub log_likelihood: f64,
    /// Component-major: `resp[k * n + i]`.
    pub resp: Vec<T>,
}

/// Per-patch component log-densities (without weights) for one block,
/// component-major `out[k * BLOCK + j]`.
fn block_log_densities<T: Real>(data: &CenteredData<T>, b: usize, model: &GmmModel<T>, scratch: &mut [T]) -> Vec<T> {
    let dim = data.dim;
    let mut out = vec![T::zero(); model.k() * BLOCK];
    let half = T::lit(0.5);
    for (k, comp) in model.components().iter().enumerate() {
        scratch.copy_from_slice(&data.blocks[b]);
        comp.cholesky().solve_lower_block(scratch, BLOCK);
        let q = &mut out[k * BLOCK..(k + 1) * BLOCK];
        for i in 0..dim {
            for (qj, &z) in q.iter_mut().zip(&scratch[i * BLOCK..(i + 1) * BLOCK]) {
                *qj += z * z;
            }
        }
        let ln = comp.log_norm();
        q.iter_mut().for_each(|v| *v = ln - half * *v);
    }
    out
}

pub(crate) fn e_step<T: Real>(data: &CenteredData<T>, model: &GmmModel<T>) -> EStep<T> {
    let k = model.k();
    let n = data.n;
    let lw = model.log_weights();
    let per_block: Vec<(f64, Vec<T>)> = (0..data.block_count())
        .into_par_iter()
        .map(|b| {
            let mut scratch = vec![T::zero(); data.dim * BLOCK];
            let ld = block_log_densities(data, b, model, &mut scratch);
            let len = data.block_len(b);
            let mut r = vec![T::zero(); k * len];
            let mut ll = 0.0;
            let mut terms = vec![T::zero(); k];
            for j in 0..len {
                for c in 0..k {
                    terms[c] = if lw[c] == T::neg_infinity() { lw[c] } else { lw[c] + ld[c * BLOCK + j] };
                }
                let lse = log_sum_exp(&terms);
                ll += lse.as_f64();
                for c in 0..k {
                    r[c * len + j] = (terms[c] - lse).exp();
                }
            }
            (ll, r)
        })
        .collect();
    let mut resp = vec![T::zero(); k * n];
    let mut log_likelihood = 0.0;
    for (b, (ll, r)) in per_block.into_iter().enumerate() {
        log_likelihood += ll;
        let len = data.block_len(b);
        for c in 0..k {
            resp[c * n + b * BLOCK..c * n + b * BLOCK + len].copy_from_slice(&r[c * len..(c + 1) * len]);
        }
    }
    EStep { log_likelihood, resp }
}

/// Responsibility-weighted scatter `Σ_i r_i x_i x_iᵀ` over the given
/// patches (lower triangle filled, then mirrored) and the total weight.
pub(crate) fn weighted_scatter<T: Real>(data: &CenteredData<T>, indices: &[usize], weights: &[T]) -> (Matrix<T>, T) {
    let dim = data.dim;
    let mut s = Matrix::zeros(dim, dim);
    let mut total = T::zero();
    let mut x = vec![T::zero(); dim * BLOCK];
    let mut y = vec![T::zero(); dim * BLOCK];
    for (chunk, wchunk) in indices.chunks(BLOCK).zip(weights.chunks(BLOCK)) {
        let w = chunk.len();
        data.gather_into(chunk, &mut x[..dim * w]);
        for i in 0..dim {
            for j in 0..w {
                y[i * w + j] = wchunk[j] * x[i * w + j];
            }
        }
        for i in 0..dim {
            let yi = &y[i * w..(i + 1) * w];
            for l in 0..=i {
                s[(i, l)] += dot(yi, &x[l * w..(l + 1) * w]);
            }
        }
        total += wchunk.iter().copied().sum::<T>();
    }
    s.symmetrize_from_lower();
    (s, total)
}

/// Builds a factor for `cov`, adding `1e-6 · tr/dim` to the diagonal once if
/// the plain factorization fails. Returns whether the repair was needed.
pub(crate) fn factor_with_repair<T: Real>(mut cov: Matrix<T>, component: usize, mass: T) -> Result<(CovarianceFactor<T>, bool)> {
    match CovarianceFactor::new(cov.clone()) {
        Ok(f) => Ok((f, false)),
        Err(Error::NotPositiveDefinite { .. }) => {
            let bump = T::lit(1e-6) * cov.trace() / T::lit(cov.rows() as f64);
            cov.add_to_diagonal(bump);
            CovarianceFactor::new(cov)
                .map(|f| (f, true))
                .map_err(|_| Error::DegenerateComponent { component, mass: mass.as_f64() })
        }
        Err(e) => Err(e),
    }
}

pub(crate) fn m_step<T: Real>(data: &CenteredData<T>, resp: &[T], old: &GmmModel<T>, ridge: f64) -> Result<(GmmModel<T>, bool)> {
    let k = old.k();
    let n = data.n;
    let n_ref = T::lit(n as f64 / k as f64);
    let ridge = T::lit(ridge);
    let prune = T::lit(PRUNE);
    let updates: Vec<Result<(T, Option<(CovarianceFactor<T>, bool)>)>> = (0..k)
        .into_par_iter()
        .map(|c| {
            let r = &resp[c * n..(c + 1) * n];
            let (idx, w): (Vec<usize>, Vec<T>) = r.iter().enumerate().filter(|(_, &v)| v >= prune).map(|(i, &v)| (i, v)).unzip();
            if idx.is_empty() {
                return Ok((T::zero(), None));
            }
            let (mut s, nk) = weighted_scatter(data, &idx, &w);
            s.add_to_diagonal(ridge * n_ref);
            s.scale(T::one() / nk);
            factor_with_repair(s, c, nk).map(|f| (nk, Some(f)))
        })
        .collect();
    let mut masses = Vec::with_capacity(k);
    let mut factors = Vec::with_capacity(k);
    let mut repaired = false;
    for (c, u) in updates.into_iter().enumerate() {
        let (nk, f) = u?;
        masses.push(nk);
        match f {
            Some((f, r)) => {
                repaired |= r;
                factors.push(f);
            }
            None => factors.push(old.component(c).clone()),
        }
    }
    let total: T = masses.iter().copied().sum();
    if !(total > T::zero()) {
        return Err(Error::DegenerateComponent { component: 0, mass: 0.0 });
    }
    let mut weights: Vec<T> = masses.iter().map(|&m| m / total).collect();
    renormalize(&mut weights);
    Ok((GmmModel::from_factors(weights, old.mean().to_vec(), factors)?, repaired))
}

/// Forces an exact-ish simplex after division rounding.
pub(crate) fn renormalize<T: Real>(w: &mut [T]) {
    let s: T = w.iter().copied().sum();
    w.iter_mut().for_each(|v| *v /= s);
}

/// `½ ρ (N/K) Σ_k tr(Σ_k⁻¹)`.
fn ridge_penalty<T: Real>(model: &GmmModel<T>, n: usize, ridge: f64) -> f64 {
    if ridge == 0.0 {
        return 0.0;
    }
    let n_ref = n as f64 / model.k() as f64;
    let tr: f64 = model.components().iter().map(|c| c.cholesky().inverse_trace().as_f64()).sum();
    0.5 * ridge * n_ref * tr
}

pub(crate) struct EmRun<'a> {
    pub config: &'a TrainConfig,
    pub iters: usize,
    pub start: Instant,
    /// Offset added to logged iteration numbers.
    pub iter_offset: usize,
}

pub(crate) fn run_em<T: Real>(data: &CenteredData<T>, mut model: GmmModel<T>, run: EmRun<'_>, log: &mut TrainingLog) -> Result<GmmModel<T>> {
    let config = run.config;
    let minibatch = config.minibatch > 0 && config.minibatch < data.n;
    let mut rng = seeded_rng(config.seed ^ 0x5eed_e11a);
    let mut previous: Option<f64> = None;
    let mut repaired = false;
    let pixels = |n: usize| (n * data.dim) as f64;
    for iter in 0..=run.iters {
        let batch;
        let view = if minibatch {
            let mut idx = sample_indices(&mut rng, data.n, config.minibatch).into_vec();
            idx.sort_unstable();
            batch = data.subset(&idx);
            &batch
        } else {
            data
        };
        let e = e_step(view, &model);
        if !e.log_likelihood.is_finite() {
            return Err(Error::NonFinite("training log-likelihood"));
        }
        let objective = e.log_likelihood - ridge_penalty(&model, view.n, config.ridge);
        let obj_pp = objective / pixels(view.n);
        log.records.push(IterRecord {
            iter: iter + run.iter_offset,
            nats_per_pixel: e.log_likelihood / pixels(view.n),
            objective_per_pixel: obj_pp,
            wall_seconds: run.start.elapsed().as_secs_f64(),
            repaired,
        });
        log::debug!("em iter {} objective {:.6} nats/pixel", iter + run.iter_offset, obj_pp);
        if let Some(prev) = previous {
            if !minibatch && !repaired && obj_pp < prev - 1e-9 * prev.abs().max(1.0) {
                return Err(Error::NonMonotone { iter: iter + run.iter_offset, previous: prev, current: obj_pp });
            }
            if !minibatch && (obj_pp - prev).abs() <= config.tol * prev.abs().max(1.0) {
                break;
            }
        }
        previous = Some(obj_pp);
        if iter == run.iters {
            break;
        }
        let (next, r) = m_step(view, &e.resp, &model, config.ridge)?;
        model = next;
        repaired = r;
    }
    Ok(model)
}

fn prepare<T: Real, P: AsRef<[T]>>(patches: &[P], mean: &[T], config: &TrainConfig) -> Result<CenteredData<T>> {
    config.validate()?;
    if patches.is_empty() {
        return Err(Error::Empty("training patches"));
    }
    let dim = mean.len();
    check_finite(mean, "mean")?;
    for p in patches {
        if p.as_ref().len() != dim {
            return Err(Error::mismatch(format!("patch of length {} for a {dim}-dim mean", p.as_ref().len())));
        }
        check_finite(p.as_ref(), "training patch")?;
    }
    let order = canonical_order(patches);
    Ok(CenteredData::new(patches, &order, mean))
}

fn require_samples(n: usize, k: usize, dim: usize) -> Result<()> {
    if n < k * (dim + 1) {
        return Err(Error::param(format!("{n} patches cannot support {k} full covariances of dim {dim} (need {})", k * (dim + 1))));
    }
    Ok(())
}

pub(crate) fn training_mean<T: Real, P: AsRef<[T]>>(patches: &[P]) -> Result<Vec<T>> {
    let first = patches.first().ok_or(Error::Empty("training patches"))?;
    let dim = first.as_ref().len();
    let mut acc = vec![0.0f64; dim];
    for p in patches {
        if p.as_ref().len() != dim {
            return Err(Error::mismatch("training patches differ in length"));
        }
        for (a, v) in acc.iter_mut().zip(p.as_ref()) {
            *a += v.as_f64();
        }
    }
    Ok(acc.into_iter().map(|a| T::lit(a / patches.len() as f64)).collect())
}

/// EM for a shared-mean mixture with `d0` fixed to the training mean.
pub fn train_gmm<T: Real, P: AsRef<[T]> + Sync>(patches: &[P], config: &TrainConfig) -> Result<(GmmModel<T>, TrainingLog)> {
    let mean = training_mean(patches)?;
    train_gmm_with_mean(patches, &mean, config)
}

/// EM with an arbitrary fixed shared mean (zero for DC-removed intensity).
pub fn train_gmm_with_mean<T: Real, P: AsRef<[T]> + Sync>(
    patches: &[P],
    mean: &[T],
    config: &TrainConfig,
) -> Result<(GmmModel<T>, TrainingLog)> {
    let start = Instant::now();
    let data = prepare(patches, mean, config)?;
    require_samples(data.n, config.k, data.dim)?;
    let init = initial_model(&data, config)?;
    let mut log = TrainingLog::default();
    let model = run_em(&data, init, EmRun { config, iters: config.max_iters, start, iter_offset: 0 }, &mut log)?;
    Ok((model, log))
}

/// EM starting from `init`; its mean is kept as `d0`.
pub fn train_gmm_from<T: Real, P: AsRef<[T]> + Sync>(
    patches: &[P],
    init: GmmModel<T>,
    config: &TrainConfig,
) -> Result<(GmmModel<T>, TrainingLog)> {
    let start = Instant::now();
    let data = prepare(patches, init.mean(), config)?;
    let mut log = TrainingLog::default();
    let model = run_em(&data, init, EmRun { config, iters: config.max_iters, start, iter_offset: 0 }, &mut log)?;
    Ok((model, log))
}

/// Trains mixtures for an increasing list of component counts. Each model
/// after the first starts from its predecessor by splitting its heaviest
/// components, so training likelihood grows with K.
pub fn train_gmm_sweep<T: Real, P: AsRef<[T]> + Sync>(
    patches: &[P],
    ks: &[usize],
    config: &TrainConfig,
) -> Result<Vec<(GmmModel<T>, TrainingLog)>> {
    if ks.is_empty() {
        return Err(Error::Empty("component counts"));
    }
    if ks.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::param("component counts must be strictly increasing"));
    }
    let mean = training_mean(patches)?;
    let first = TrainConfig { k: ks[0], ..config.clone() };
    let data = prepare(patches, &mean, &first)?;
    require_samples(data.n, *ks.last().unwrap_or(&1), data.dim)?;
    let mut out: Vec<(GmmModel<T>, TrainingLog)> = Vec::with_capacity(ks.len());
    for &k in ks {
        let start = Instant::now();
        let cfg = TrainConfig { k, ..config.clone() };
        let mut log = TrainingLog::default();
        let init = match out.last() {
            None => initial_model(&data, &cfg)?,
            Some((prev, _)) => split_model(&data, prev, k, &cfg, &mut log, start)?,
        };
        let offset = log.records.last().map_or(0, |r| r.iter + 1);
        let model = run_em(&data, init, EmRun { config: &cfg, iters: cfg.max_iters, start, iter_offset: offset }, &mut log)?;
        log::info!("K={k}: {:.6} nats/pixel", log.final_nats_per_pixel().unwrap_or(f64::NAN));
        out.push((model, log));
    }
    Ok(out)
}

/// Runs `iters` EM iterations without logging; used between split rounds.
pub(crate) fn refine<T: Real>(data: &CenteredData<T>, model: GmmModel<T>, config: &TrainConfig, iters: usize, log: &mut TrainingLog, start: Instant) -> Result<GmmModel<T>> {
    let offset = log.records.last().map_or(0, |r| r.iter + 1);
    let mut scratch = TrainingLog::default();
    let out = run_em(data, model, EmRun { config, iters, start, iter_offset: offset }, &mut scratch)?;
    log.records.extend(scratch.records);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blocks_round_trip_columns() {
        let patches: Vec<Vec<f64>> = (0..300).map(|i| vec![i as f64, -(i as f64)]).collect();
        let order: Vec<usize> = (0..300).collect();
        let d = CenteredData::new(&patches, &order, &[1.0, 0.0]);
        assert_eq!(d.block_count(), 2);
        assert_eq!(d.block_len(1), 44);
        assert_eq!(d.column(299), vec![298.0, -299.0]);
        let s = d.subset(&[5, 280]);
        assert_eq!(s.column(1), vec![279.0, -280.0]);
    }

    #[test]
    fn scatter_matches_direct_sum() {
        let patches: Vec<Vec<f64>> = (0..600).map(|i| vec![(i % 7) as f64, (i % 5) as f64 - 2.0, (i % 3) as f64]).collect();
        let order: Vec<usize> = (0..600).collect();
        let d = CenteredData::new(&patches, &order, &[0.0; 3]);
        let idx: Vec<usize> = (0..600).step_by(2).collect();
        let w: Vec<f64> = idx.iter().map(|&i| 0.5 + (i % 4) as f64).collect();
        let (s, total) = weighted_scatter(&d, &idx, &w);
        let mut direct = [[0.0; 3]; 3];
        for (&i, &wi) in idx.iter().zip(&w) {
            for a in 0..3 {
                for b in 0..3 {
                    direct[a][b] += wi * patches[i][a] * patches[i][b];
                }
            }
        }
        assert!((total - w.iter().sum::<f64>()).abs() < 1e-9);
        for a in 0..3 {
            for b in 0..3 {
                assert!((s[(a, b)] - direct[a][b]).abs() < 1e-9 * direct[a][b].abs().max(1.0));
            }
        }
    }

    #[test]
    fn canonical_order_is_lexicographic() {
        let p = vec![vec![1.0, 2.0], vec![0.5, 9.0], vec![1.0, 1.0]];
        assert_eq!(canonical_order(&p), vec![1, 2, 0]);
    }

    #[test]
    fn e_step_matches_model_responsibilities() {
        let m = GmmModel::new(
            vec![0.3, 0.7],
            vec![0.1],
            vec![Matrix::from_row_major(1, 1, vec![0.5]).unwrap(), Matrix::from_row_major(1, 1, vec![3.0]).unwrap()],
        )
        .unwrap();
        let patches: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64 * 0.4 - 2.0]).collect();
        let order: Vec<usize> = (0..10).collect();
        let d = CenteredData::new(&patches, &order, &[0.1]);
        let e = e_step(&d, &m);
        let mut ll = 0.0;
        for (i, p) in patches.iter().enumerate() {
            use crate::models::DensityModel;
            ll += m.log_density(p).unwrap();
            let r = m.responsibilities(p).unwrap();
            assert!((e.resp[i] - r[0]).abs() < 1e-12);
            assert!((e.resp[10 + i] - r[1]).abs() < 1e-12);
        }
        assert!((e.log_likelihood - ll).abs() < 1e-10);
    }
}
