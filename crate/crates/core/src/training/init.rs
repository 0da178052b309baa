use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::models::{seeded_rng, GmmModel, SeededRng};
use crate::scalar::{dot, Real};
use crate::training::em::{canonical_order, e_step, factor_with_repair, refine, renormalize, weighted_scatter, CenteredData};
use crate::training::{TrainConfig, TrainingLog};

fn global_covariance<T: Real>(data: &CenteredData<T>) -> Matrix<T> {
    let idx: Vec<usize> = (0..data.n).collect();
    let w = vec![T::one(); data.n];
    let (mut s, total) = weighted_scatter(data, &idx, &w);
    s.scale(T::one() / total);
    s
}

/// Covariance of `members` shrunk toward `prior` with `dim` pseudo-samples.
fn shrunk_covariance<T: Real>(data: &CenteredData<T>, members: &[usize], prior: &Matrix<T>) -> Matrix<T> {
    let dim = T::lit(data.dim as f64);
    let mut s = if members.is_empty() {
        Matrix::zeros(data.dim, data.dim)
    } else {
        weighted_scatter(data, members, &vec![T::one(); members.len()]).0
    };
    for (a, &b) in s.as_mut_slice().iter_mut().zip(prior.as_slice()) {
        *a += dim * b;
    }
    s.scale(T::one() / (T::lit(members.len() as f64) + dim));
    s
}

/// K-means features: DC-removed patches. A single pixel has no DC-free
/// part, so 1-D data is clustered by distance from the mean instead.
fn dc_removed_rows<T: Real>(data: &CenteredData<T>) -> Vec<T> {
    if data.dim == 1 {
        return (0..data.n).map(|i| data.column(i)[0].abs()).collect();
    }
    let mut out = Vec::with_capacity(data.n * data.dim);
    for i in 0..data.n {
        let p: Vec<T> = data.column(i).into_iter().zip(&data.mean).map(|(x, &m)| x + m).collect();
        let dc = p.iter().copied().sum::<T>() / T::lit(data.dim as f64);
        out.extend(p.into_iter().map(|v| v - dc));
    }
    out
}

fn sq_dist<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum()
}

fn nearest<T: Real>(point: &[T], centers: &[Vec<T>]) -> (usize, T) {
    let mut best = (0, T::infinity());
    for (c, center) in centers.iter().enumerate() {
        let d = sq_dist(point, center);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn draw_proportional<T: Real>(weights: &[T], rng: &mut SeededRng) -> usize {
    let total: f64 = weights.iter().map(|w| w.as_f64()).sum();
    if !(total > 0.0) {
        return rng.random_range(0..weights.len());
    }
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w.as_f64();
        if u < acc {
            return i;
        }
    }
    weights.iter().rposition(|w| *w > T::zero()).unwrap_or(weights.len() - 1)
}

/// K-means++ seeding plus Lloyd iterations; returns the hard assignment.
fn kmeans<T: Real>(points: &[T], dim: usize, k: usize, iters: usize, rng: &mut SeededRng) -> Vec<usize> {
    let n = points.len() / dim;
    let row = |i: usize| &points[i * dim..(i + 1) * dim];
    let mut centers: Vec<Vec<T>> = vec![row(rng.random_range(0..n)).to_vec()];
    let mut d2: Vec<T> = (0..n).into_par_iter().map(|i| sq_dist(row(i), &centers[0])).collect();
    while centers.len() < k {
        let next = row(draw_proportional(&d2, rng)).to_vec();
        d2.par_iter_mut().enumerate().for_each(|(i, d)| *d = d.min(sq_dist(row(i), &next)));
        centers.push(next);
    }
    let mut assign: Vec<usize> = (0..n).into_par_iter().map(|i| nearest(row(i), &centers).0).collect();
    for _ in 0..iters {
        let mut sums = vec![vec![0.0f64; dim]; k];
        let mut counts = vec![0usize; k];
        for (i, &a) in assign.iter().enumerate() {
            counts[a] += 1;
            for (s, v) in sums[a].iter_mut().zip(row(i)) {
                *s += v.as_f64();
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centers[c] = sums[c].iter().map(|s| T::lit(s / counts[c] as f64)).collect();
            }
        }
        let next: Vec<usize> = (0..n).into_par_iter().map(|i| nearest(row(i), &centers).0).collect();
        if next == assign {
            break;
        }
        assign = next;
    }
    assign
}

pub(crate) fn initial_model<T: Real>(data: &CenteredData<T>, config: &TrainConfig) -> Result<GmmModel<T>> {
    let global = global_covariance(data);
    if config.k == 1 {
        let (f, _) = factor_with_repair(global, 0, T::lit(data.n as f64))?;
        return GmmModel::from_factors(vec![T::one()], data.mean.clone(), vec![f]);
    }
    let mut rng = seeded_rng(config.seed);
    let points = dc_removed_rows(data);
    let assign = kmeans(&points, data.dim, config.k, config.kmeans_iters, &mut rng);
    let mut members = vec![Vec::new(); config.k];
    for (i, &a) in assign.iter().enumerate() {
        members[a].push(i);
    }
    let factors = members
        .par_iter()
        .enumerate()
        .map(|(c, m)| factor_with_repair(shrunk_covariance(data, m, &global), c, T::lit(m.len() as f64)).map(|f| f.0))
        .collect::<Result<Vec<_>>>()?;
    let mut weights: Vec<T> = members.iter().map(|m| T::lit(m.len() as f64 + 1.0)).collect();
    renormalize(&mut weights);
    GmmModel::from_factors(weights, data.mean.clone(), factors)
}

/// Top two eigenvectors of a symmetric PSD matrix.
fn top_two_directions<T: Real>(cov: &Matrix<T>) -> (Vec<T>, Vec<T>) {
    let (l1, v1) = cov.leading_eigenpair(200);
    let mut deflated = cov.clone();
    for r in 0..cov.rows() {
        for c in 0..cov.cols() {
            deflated[(r, c)] -= l1 * v1[r] * v1[c];
        }
    }
    let (_, v2) = deflated.leading_eigenpair(200);
    (v1, v2)
}

fn split_members<T: Real>(data: &CenteredData<T>, members: &[usize], cov: &Matrix<T>) -> (Vec<usize>, Vec<usize>) {
    let cols: Vec<Vec<T>> = members.iter().map(|&i| data.column(i)).collect();
    let first: Vec<bool> = if data.dim == 1 {
        let mut mags: Vec<T> = cols.iter().map(|x| x[0].abs()).collect();
        mags.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        let median = mags.get(mags.len() / 2).copied().unwrap_or(T::zero());
        cols.iter().map(|x| x[0].abs() < median).collect()
    } else {
        let (v1, v2) = top_two_directions(cov);
        cols.iter().map(|x| dot(&v1, x).abs() >= dot(&v2, x).abs()).collect()
    };
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for (&i, f) in members.iter().zip(first) {
        if f { a.push(i) } else { b.push(i) }
    }
    (a, b)
}

/// Splits the heaviest components of `model` until it has `target` of
/// them, running a few EM iterations between rounds.
pub(crate) fn split_model<T: Real>(
    data: &CenteredData<T>,
    model: &GmmModel<T>,
    target: usize,
    config: &TrainConfig,
    log: &mut TrainingLog,
    start: Instant,
) -> Result<GmmModel<T>> {
    if target < model.k() {
        return Err(Error::param(format!("cannot split {} components down to {target}", model.k())));
    }
    let mut model = model.clone();
    while model.k() < target {
        let k = model.k();
        let e = e_step(data, &model);
        let mut members = vec![Vec::new(); k];
        for i in 0..data.n {
            let mut best = 0;
            for c in 1..k {
                if e.resp[c * data.n + i] > e.resp[best * data.n + i] {
                    best = c;
                }
            }
            members[best].push(i);
        }
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| model.weights()[b].partial_cmp(&model.weights()[a]).expect("finite").then(a.cmp(&b)));
        let chosen = &order[..(target - k).min(k)];

        let mut weights = model.weights().to_vec();
        let mut factors = model.components().to_vec();
        let splits: Vec<Result<_>> = chosen
            .par_iter()
            .map(|&c| {
                let parent = model.component(c).covariance();
                let (a, b) = split_members(data, &members[c], parent);
                let fa = factor_with_repair(shrunk_covariance(data, &a, parent), c, T::lit(a.len() as f64))?.0;
                let fb = factor_with_repair(shrunk_covariance(data, &b, parent), c, T::lit(b.len() as f64))?.0;
                let denom = T::lit(members[c].len() as f64 + 2.0);
                Ok((c, fa, fb, T::lit(a.len() as f64 + 1.0) / denom, T::lit(b.len() as f64 + 1.0) / denom))
            })
            .collect();
        for s in splits {
            let (c, fa, fb, wa, wb) = s?;
            let w = weights[c];
            weights[c] = w * wa;
            factors[c] = fa;
            weights.push(w * wb);
            factors.push(fb);
        }
        renormalize(&mut weights);
        model = GmmModel::from_factors(weights, model.mean().to_vec(), factors)?;
        if model.k() < target {
            model = refine(data, model, config, config.split_em_iters, log, start)?;
        }
    }
    Ok(model)
}

fn center<T: Real, P: AsRef<[T]>>(patches: &[P], mean: &[T]) -> Result<CenteredData<T>> {
    if patches.is_empty() {
        return Err(Error::Empty("training patches"));
    }
    if let Some(p) = patches.iter().find(|p| p.as_ref().len() != mean.len()) {
        return Err(Error::mismatch(format!("patch of length {} for a {}-dim mean", p.as_ref().len(), mean.len())));
    }
    let order = canonical_order(patches);
    Ok(CenteredData::new(patches, &order, mean))
}

/// Initial mixture from K-means++ clustering of DC-removed patches, with
/// each cluster's covariance about `mean` shrunk toward the global one.
pub fn kmeans_pp_init<T: Real, P: AsRef<[T]>>(patches: &[P], mean: &[T], config: &TrainConfig) -> Result<GmmModel<T>> {
    config.validate()?;
    initial_model(&center(patches, mean)?, config)
}

/// Grows `model` to `target` components by splitting its heaviest ones.
pub fn split_components<T: Real, P: AsRef<[T]>>(
    patches: &[P],
    model: &GmmModel<T>,
    target: usize,
    config: &TrainConfig,
) -> Result<GmmModel<T>> {
    let data = center(patches, model.mean())?;
    split_model(&data, model, target, config, &mut TrainingLog::default(), Instant::now())
}
