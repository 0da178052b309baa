use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::models::{check_finite, standard_normals, CovarianceFactor, DensityModel, GaussianModel, SeededRng};
use crate::scalar::{log_sum_exp, Real};

/// Gaussian mixture with one shared mean `d0` and a full covariance per
/// component: `p(d) = Σ_k π_k N(d; d0, Σ_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmModel<T> {
    weights: Vec<T>,
    log_weights: Vec<T>,
    mean: Vec<T>,
    components: Vec<CovarianceFactor<T>>,
}

pub(crate) fn simplex_tolerance<T: Real>() -> T {
    T::lit(1e-12).max(T::epsilon() * T::lit(256.0))
}

pub(crate) fn validate_simplex<T: Real>(weights: &[T], what: &str) -> Result<()> {
    if weights.is_empty() {
        return Err(Error::param(format!("{what}: no entries")));
    }
    if weights.iter().any(|w| !(*w >= T::zero()) || !w.is_finite()) {
        return Err(Error::param(format!("{what}: entries must be finite and nonnegative")));
    }
    let total: T = weights.iter().copied().sum();
    if (total - T::one()).abs() > simplex_tolerance::<T>() {
        return Err(Error::param(format!("{what}: entries sum to {total}, not 1")));
    }
    Ok(())
}

impl<T: Real> GmmModel<T> {
    pub fn new(weights: Vec<T>, mean: Vec<T>, covariances: Vec<Matrix<T>>) -> Result<Self> {
        let components = covariances.into_iter().map(CovarianceFactor::new).collect::<Result<Vec<_>>>()?;
        Self::from_factors(weights, mean, components)
    }

    pub fn from_factors(weights: Vec<T>, mean: Vec<T>, components: Vec<CovarianceFactor<T>>) -> Result<Self> {
        if weights.len() != components.len() {
            return Err(Error::mismatch(format!("{} weights for {} components", weights.len(), components.len())));
        }
        validate_simplex(&weights, "mixing weights")?;
        check_finite(&mean, "mean")?;
        if let Some(c) = components.iter().find(|c| c.dim() != mean.len()) {
            return Err(Error::mismatch(format!("component of dim {} with mean of length {}", c.dim(), mean.len())));
        }
        let log_weights = weights.iter().map(|w| w.ln()).collect();
        Ok(Self { weights, log_weights, mean, components })
    }

    pub fn from_gaussian(g: GaussianModel<T>) -> Self {
        let (mean, factor) = g.into_parts();
        Self { weights: vec![T::one()], log_weights: vec![T::zero()], mean, components: vec![factor] }
    }

    /// Same components with different mixing weights.
    pub fn with_weights(&self, weights: Vec<T>) -> Result<Self> {
        Self::from_factors(weights, self.mean.clone(), self.components.clone())
    }

    #[inline]
    pub fn k(&self) -> usize {
        self.components.len()
    }

    #[inline]
    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    #[inline]
    pub fn log_weights(&self) -> &[T] {
        &self.log_weights
    }

    #[inline]
    pub fn mean(&self) -> &[T] {
        &self.mean
    }

    #[inline]
    pub fn components(&self) -> &[CovarianceFactor<T>] {
        &self.components
    }

    #[inline]
    pub fn component(&self, k: usize) -> &CovarianceFactor<T> {
        &self.components[k]
    }

    fn centered(&self, x: &[T]) -> Result<Vec<T>> {
        if x.len() != self.mean.len() {
            return Err(Error::mismatch(format!("input of length {} for a {}-dim model", x.len(), self.mean.len())));
        }
        check_finite(x, "input")?;
        Ok(x.iter().zip(&self.mean).map(|(&a, &m)| a - m).collect())
    }

    /// Component log-densities `ln N(x; d0, Σ_k)`, without mixing weights.
    pub fn component_log_densities(&self, x: &[T]) -> Result<Vec<T>> {
        let c = self.centered(x)?;
        Ok(self.components.iter().map(|f| f.log_density_centered(&c)).collect())
    }

    /// Log-density under arbitrary mixing weights given as logs.
    pub fn log_density_with_prior(&self, x: &[T], log_prior: &[T]) -> Result<T> {
        let mut terms = self.component_log_densities(x)?;
        for (t, &lp) in terms.iter_mut().zip(log_prior) {
            *t = if lp == T::neg_infinity() { lp } else { *t + lp };
        }
        Ok(log_sum_exp(&terms))
    }

    /// Posterior component probabilities `p(k | x)`.
    pub fn responsibilities(&self, x: &[T]) -> Result<Vec<T>> {
        let mut terms = self.component_log_densities(x)?;
        for (t, &lw) in terms.iter_mut().zip(&self.log_weights) {
            *t = if lw == T::neg_infinity() { lw } else { *t + lw };
        }
        let lse = log_sum_exp(&terms);
        Ok(terms.into_iter().map(|t| (t - lse).exp()).collect())
    }

    pub fn sample_component(&self, k: usize, rng: &mut SeededRng) -> Vec<T> {
        let z = standard_normals(rng, self.mean.len());
        let lz = self.components[k].cholesky().lower_mul(&z);
        lz.into_iter().zip(&self.mean).map(|(a, &m)| a + m).collect()
    }

    /// Draws a component index from `weights` (any nonnegative vector that
    /// sums to one).
    pub fn draw_component(weights: &[T], rng: &mut SeededRng) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (k, w) in weights.iter().enumerate() {
            acc += w.as_f64();
            if u < acc {
                return k;
            }
        }
        // rounding: fall back to the last component with nonzero weight
        weights.iter().rposition(|w| *w > T::zero()).unwrap_or(weights.len() - 1)
    }
}

impl<T: Real> DensityModel<T> for GmmModel<T> {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn log_density(&self, x: &[T]) -> Result<T> {
        self.log_density_with_prior(x, &self.log_weights)
    }

    fn sample_with(&self, rng: &mut SeededRng) -> Vec<T> {
        let k = Self::draw_component(&self.weights, rng);
        self.sample_component(k, rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::seeded_rng;

    fn scalar_cov(v: f64) -> Matrix<f64> {
        Matrix::from_row_major(1, 1, vec![v]).unwrap()
    }

    #[test]
    fn two_component_density_matches_direct_evaluation() {
        let gmm = GmmModel::new(vec![0.5, 0.5], vec![0.0], vec![scalar_cov(1.0), scalar_cov(4.0)]).unwrap();
        let x: f64 = 1.0;
        let pdf = |v: f64| (-(x * x) / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).sqrt();
        let direct = (0.5 * pdf(1.0) + 0.5 * pdf(4.0)).ln();
        assert!((gmm.log_density(&[x]).unwrap() - direct).abs() < 1e-12);
    }

    #[test]
    fn single_component_equals_gaussian() {
        let cov = Matrix::from_row_major(2, 2, vec![2.0, 0.3, 0.3, 1.0]).unwrap();
        let g = GaussianModel::new(vec![0.1, -0.2], cov).unwrap();
        let gmm = GmmModel::from_gaussian(g.clone());
        for x in [[0.0, 0.0], [1.0, -3.0], [0.5, 0.25]] {
            assert_eq!(gmm.log_density(&x).unwrap(), g.log_density(&x).unwrap());
        }
    }

    #[test]
    fn permutation_invariance() {
        let covs = vec![scalar_cov(0.5), scalar_cov(2.0), scalar_cov(9.0)];
        let a = GmmModel::new(vec![0.2, 0.3, 0.5], vec![0.0], covs.clone()).unwrap();
        let b = GmmModel::new(vec![0.5, 0.2, 0.3], vec![0.0], vec![covs[2].clone(), covs[0].clone(), covs[1].clone()]).unwrap();
        for x in [-3.0, 0.0, 0.7, 12.0] {
            assert!((a.log_density(&[x]).unwrap() - b.log_density(&[x]).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn underflowing_component_stays_finite() {
        let gmm = GmmModel::new(vec![0.5, 0.5], vec![0.0], vec![scalar_cov(1e-6), scalar_cov(1.0)]).unwrap();
        let v = gmm.log_density(&[50.0]).unwrap();
        assert!(v.is_finite());
        let r = gmm.responsibilities(&[50.0]).unwrap();
        assert_eq!(r[0], 0.0);
        assert!((r[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn weight_validation() {
        assert!(GmmModel::new(vec![0.5, 0.6], vec![0.0], vec![scalar_cov(1.0), scalar_cov(1.0)]).is_err());
        assert!(GmmModel::new(vec![1.5, -0.5], vec![0.0], vec![scalar_cov(1.0), scalar_cov(1.0)]).is_err());
        assert!(GmmModel::new(vec![1.0], vec![0.0, 0.0], vec![scalar_cov(1.0)]).is_err());
    }

    #[test]
    fn zero_weight_component_never_drawn() {
        let gmm = GmmModel::new(vec![0.0, 1.0], vec![0.0], vec![scalar_cov(1e-20), scalar_cov(1.0)]).unwrap();
        let mut rng = seeded_rng(3);
        for _ in 0..1000 {
            assert_eq!(GmmModel::<f64>::draw_component(gmm.weights(), &mut rng), 1);
        }
        assert!(gmm.log_density(&[0.3]).unwrap().is_finite());
    }
}
