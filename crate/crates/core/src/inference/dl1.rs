use crate::error::Result;
use crate::inference::{DegradationSpec, Method, RestorationResult, NOISE_FLOOR};
use crate::linalg::{Cholesky, Matrix};
use crate::models::Dl1Model;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IrlsOptions {
    /// Smoothing of `|t| ≈ √(t² + δ²)`.
    pub delta: f64,
    /// Relative objective decrease below which iteration stops.
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for IrlsOptions {
    fn default() -> Self {
        Self { delta: 1e-6, tol: 1e-8, max_iters: 500 }
    }
}

fn smooth_abs<T: Real>(t: T, delta: T) -> T {
    (t * t + delta * delta).sqrt()
}

struct Problem<'a, T> {
    model: &'a Dl1Model<T>,
    y: &'a [T],
    // 1 / noise variance on observed pixels, 0 elsewhere
    data_weight: Vec<T>,
    delta: T,
}

impl<T: Real> Problem<'_, T> {
    fn objective(&self, d: &[T]) -> T {
        let m = self.model;
        let tv: T = m.operator().row_pairs().iter().map(|&(p, q)| smooth_abs(d[p] - d[q], self.delta)).sum();
        let l1: T = d.iter().map(|&v| smooth_abs(v, self.delta)).sum();
        let data: T = d.iter().zip(self.y).zip(&self.data_weight).map(|((&a, &b), &w)| if w > T::zero() { w * (a - b) * (a - b) } else { T::zero() }).sum();
        m.lambda * tv + m.epsilon * l1 + T::lit(0.5) * data
    }

    /// Minimizes the quadratic majorizer at `d`.
    fn step(&self, d: &[T]) -> Result<Vec<T>> {
        let n = d.len();
        let m = self.model;
        let mut h = Matrix::zeros(n, n);
        for &(p, q) in m.operator().row_pairs() {
            let w = m.lambda / smooth_abs(d[p] - d[q], self.delta);
            h[(p, p)] += w;
            h[(q, q)] += w;
            h[(p, q)] -= w;
            h[(q, p)] -= w;
        }
        let mut rhs = vec![T::zero(); n];
        for i in 0..n {
            h[(i, i)] += m.epsilon / smooth_abs(d[i], self.delta) + self.data_weight[i];
            if self.data_weight[i] > T::zero() {
                rhs[i] = self.data_weight[i] * self.y[i];
            }
        }
        Ok(Cholesky::new(&h)?.solve(&rhs))
    }
}

/// MAP estimate under the absolute-derivative prior by iteratively
/// reweighted least squares. Each step minimizes a quadratic majorizer of
/// the smoothed objective, so the objective never increases. On hitting
/// `max_iters` the best iterate is returned with `converged = false`.
pub fn map_dl1<T: Real>(model: &Dl1Model<T>, y: &[T], spec: &DegradationSpec<T>) -> Result<RestorationResult<T>> {
    map_dl1_with(model, y, spec, &IrlsOptions::default()).map(|(r, _)| r)
}

/// As [`map_dl1`], also returning the objective after every iteration.
pub fn map_dl1_with<T: Real>(
    model: &Dl1Model<T>,
    y: &[T],
    spec: &DegradationSpec<T>,
    opts: &IrlsOptions,
) -> Result<(RestorationResult<T>, Vec<T>)> {
    spec.check_input(y)?;
    if model.operator().pixels() != spec.dim() {
        return Err(crate::Error::mismatch(format!("{}-pixel degradation for a {}-pixel model", spec.dim(), model.operator().pixels())));
    }
    let floor = T::lit(NOISE_FLOOR);
    let data_weight: Vec<T> = spec
        .observed()
        .iter()
        .zip(spec.noise_var())
        .map(|(&o, &v)| if o { T::one() / v.max(floor) } else { T::zero() })
        .collect();
    let problem = Problem { model, y, data_weight, delta: T::lit(opts.delta) };

    let observed = spec.observed_indices();
    let fill = if observed.is_empty() {
        T::zero()
    } else {
        observed.iter().map(|&i| y[i]).sum::<T>() / T::lit(observed.len() as f64)
    };
    let mut d: Vec<T> = (0..y.len()).map(|i| if spec.observed()[i] { y[i] } else { fill }).collect();
    let mut f = problem.objective(&d);
    let mut history = vec![f];
    let tol = T::lit(opts.tol);
    let mut converged = false;
    for _ in 0..opts.max_iters {
        let next = problem.step(&d)?;
        let f_next = problem.objective(&next);
        if !(f_next <= f) {
            // rounding at the optimum; keep the best iterate
            converged = true;
            break;
        }
        let decrease = f - f_next;
        d = next;
        f = f_next;
        history.push(f);
        if decrease <= tol * f.abs().max(T::min_positive_value()) {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("DL1 MAP stopped after {} iterations without converging", opts.max_iters);
    }
    Ok((RestorationResult { estimate: d, posterior_weights: None, method: Method::Map, converged }, history))
}
