use crate::error::{Error, Result};
use crate::linalg::{Cholesky, Matrix};
use crate::models::{check_finite, standard_normals, DensityModel, SeededRng};
use crate::operators::{build_dl2_precision, DerivativeOperator};
use crate::scalar::Real;

/// A covariance matrix with its Cholesky factor and Gaussian normalizer
/// `-½ ln det Σ - (n/2) ln 2π`.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceFactor<T> {
    covariance: Matrix<T>,
    chol: Cholesky<T>,
    log_norm: T,
}

impl<T: Real> CovarianceFactor<T> {
    pub fn new(mut covariance: Matrix<T>) -> Result<Self> {
        if !covariance.is_square() {
            return Err(Error::mismatch("covariance must be square"));
        }
        if !covariance.is_finite() {
            return Err(Error::NonFinite("covariance"));
        }
        let scale = covariance.as_slice().iter().fold(T::zero(), |m, v| m.max(v.abs()));
        let tol = T::lit(1e-10).max(T::epsilon() * T::lit(64.0)) * scale.max(T::one());
        if covariance.asymmetry() > tol {
            return Err(Error::param("covariance is not symmetric"));
        }
        covariance.symmetrize_from_lower();
        let chol = Cholesky::new(&covariance)?;
        let n = T::lit(covariance.rows() as f64);
        let log_norm = -T::lit(0.5) * (chol.log_det() + n * T::ln_2pi());
        Ok(Self { covariance, chol, log_norm })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.covariance.rows()
    }

    #[inline]
    pub fn covariance(&self) -> &Matrix<T> {
        &self.covariance
    }

    #[inline]
    pub fn cholesky(&self) -> &Cholesky<T> {
        &self.chol
    }

    #[inline]
    pub fn log_norm(&self) -> T {
        self.log_norm
    }

    /// `ln N(x; 0, Σ)` for an already centered `x`.
    pub fn log_density_centered(&self, centered: &[T]) -> T {
        self.log_norm - T::lit(0.5) * self.chol.inverse_quadratic_form(centered)
    }
}

/// Multivariate Gaussian with dense covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianModel<T> {
    mean: Vec<T>,
    factor: CovarianceFactor<T>,
}

impl<T: Real> GaussianModel<T> {
    pub fn new(mean: Vec<T>, covariance: Matrix<T>) -> Result<Self> {
        if mean.len() != covariance.rows() {
            return Err(Error::mismatch(format!("mean of length {} with {}x{} covariance", mean.len(), covariance.rows(), covariance.cols())));
        }
        check_finite(&mean, "mean")?;
        Ok(Self { mean, factor: CovarianceFactor::new(covariance)? })
    }

    /// Gaussian with precision (inverse covariance) `precision`.
    pub fn from_precision(mean: Vec<T>, precision: &Matrix<T>) -> Result<Self> {
        let chol = Cholesky::new(precision)?;
        Self::new(mean, chol.inverse())
    }

    /// The quadratic-derivative prior `exp(-dᵀ(λAᵀA + εI)d)` as a Gaussian
    /// with zero mean and precision `2(λAᵀA + εI)`.
    pub fn dl2(op: &DerivativeOperator, lambda: T, epsilon: T) -> Result<Self> {
        let q = build_dl2_precision(op, lambda, epsilon)?;
        Self::from_precision(vec![T::zero(); op.pixels()], &q.gaussian_precision())
    }

    #[inline]
    pub fn mean(&self) -> &[T] {
        &self.mean
    }

    #[inline]
    pub fn covariance(&self) -> &Matrix<T> {
        self.factor.covariance()
    }

    #[inline]
    pub fn factor(&self) -> &CovarianceFactor<T> {
        &self.factor
    }

    pub fn into_parts(self) -> (Vec<T>, CovarianceFactor<T>) {
        (self.mean, self.factor)
    }
}

impl<T: Real> DensityModel<T> for GaussianModel<T> {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn log_density(&self, x: &[T]) -> Result<T> {
        if x.len() != self.mean.len() {
            return Err(Error::mismatch(format!("input of length {} for a {}-dim model", x.len(), self.mean.len())));
        }
        check_finite(x, "input")?;
        let centered: Vec<T> = x.iter().zip(&self.mean).map(|(&a, &m)| a - m).collect();
        Ok(self.factor.log_density_centered(&centered))
    }

    fn sample_with(&self, rng: &mut SeededRng) -> Vec<T> {
        let z = standard_normals(rng, self.mean.len());
        let lz = self.factor.cholesky().lower_mul(&z);
        lz.into_iter().zip(&self.mean).map(|(a, &m)| a + m).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::seeded_rng;

    #[test]
    fn unit_gaussian_at_zero() {
        let g = GaussianModel::new(vec![0.0], Matrix::identity(1)).unwrap();
        let v = g.log_density(&[0.0]).unwrap();
        assert!((v + 0.5 * (2.0 * std::f64::consts::PI).ln()).abs() < 1e-15);
        assert!((v + 0.9189385332046727).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_inputs() {
        let g = GaussianModel::new(vec![0.0, 0.0], Matrix::identity(2)).unwrap();
        assert!(g.log_density(&[0.0]).is_err());
        assert!(matches!(g.log_density(&[f64::INFINITY, 0.0]), Err(Error::NonFinite(_))));
        let bad = Matrix::from_row_major(2, 2, vec![1.0, 0.5, 0.0, 1.0]).unwrap();
        assert!(GaussianModel::new(vec![0.0, 0.0], bad).is_err());
    }

    #[test]
    fn tiny_variance_sample_is_mean() {
        let mut cov = Matrix::<f64>::identity(3);
        cov.scale(1e-30);
        let g = GaussianModel::<f64>::new(vec![0.1, 0.2, 0.3], cov).unwrap();
        let s = g.sample_with(&mut seeded_rng(4));
        for (a, b) in s.iter().zip(g.mean()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let op = DerivativeOperator::patch();
        let g = GaussianModel::dl2(&op, 10.0, 0.01).unwrap();
        assert_eq!(crate::models::sample(&g, 9).unwrap(), crate::models::sample(&g, 9).unwrap());
        assert_ne!(crate::models::sample(&g, 9).unwrap(), crate::models::sample(&g, 10).unwrap());
    }

    #[test]
    fn unit_gaussian_moments() {
        let g = GaussianModel::new(vec![0.0], Matrix::identity(1)).unwrap();
        let mut rng = seeded_rng(123);
        let n = 100_000;
        let xs: Vec<f64> = (0..n).map(|_| g.sample_with(&mut rng)[0]).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((var - 1.0).abs() < 0.05, "var {var}");
    }

    #[test]
    fn dl2_expected_energy() {
        // E[dᵀQd] = n/2 when the precision is 2Q
        let op = DerivativeOperator::patch();
        let q = build_dl2_precision(&op, 50.0, 0.01).unwrap();
        let g = GaussianModel::<f64>::dl2(&op, 50.0, 0.01).unwrap();
        let mut rng = seeded_rng(77);
        let n = 10_000;
        let mean = (0..n).map(|_| q.quadratic_form(&g.sample_with(&mut rng))).sum::<f64>() / n as f64;
        assert!((mean - 32.0).abs() < 0.05 * 32.0, "mean energy {mean}");
    }
}
