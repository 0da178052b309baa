//! Intensity-conditioned disparity models.
//!
//! * [`Dl2IntModel`]: a Gaussian whose precision `2(λ Aᵀ W(c) A + ε I)`
//!   relaxes smoothness across intensity edges.
//! * [`HmmModel`]: a disparity mixture whose component prior is the
//!   intensity-mixture posterior pushed through a row-stochastic
//!   transition matrix, `p(k_d | c) = Σ_i p(i | c) T[i, k_d]`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{Cholesky, Matrix};
use crate::models::{check_finite, standard_normals, DensityModel, GaussianModel, GmmModel, SeededRng};
use crate::operators::{build_dl2int_precision, DerivativeOperator, IntensityWeights, PrecisionMatrix};
use crate::patch::remove_dc_slice;
use crate::scalar::{dot, Real};

/// A density over disparity given an aligned intensity vector.
pub trait ConditionalDensity<T: Real>: Sync {
    fn dim(&self) -> usize;

    fn conditional_log_density(&self, d: &[T], c: &[T]) -> Result<T>;

    fn conditional_sample(&self, c: &[T], rng: &mut SeededRng) -> Result<Vec<T>>;
}

/// Mean of `ln p(d | c)` per pixel over aligned pairs.
pub fn conditional_log_likelihood_per_pixel<T, M, P>(model: &M, pairs: &[(P, P)]) -> Result<T>
where
    T: Real,
    M: ConditionalDensity<T> + ?Sized,
    P: AsRef<[T]> + Sync,
{
    if pairs.is_empty() {
        return Err(Error::Empty("test set"));
    }
    let values: Vec<T> = pairs
        .par_iter()
        .map(|(c, d)| model.conditional_log_density(d.as_ref(), c.as_ref()))
        .collect::<Result<_>>()?;
    Ok(values.into_iter().sum::<T>() / T::lit((pairs.len() * model.dim()) as f64))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dl2IntModel<T> {
    op: DerivativeOperator,
    pub lambda: T,
    pub epsilon: T,
    pub sigma: T,
}

impl<T: Real> Dl2IntModel<T> {
    pub fn new(op: DerivativeOperator, lambda: T, epsilon: T, sigma: T) -> Result<Self> {
        for (name, v) in [("lambda", lambda), ("epsilon", epsilon), ("sigma", sigma)] {
            if !(v > T::zero()) || !v.is_finite() {
                return Err(Error::param(format!("DL2|int {name} must be positive, got {v}")));
            }
        }
        Ok(Self { op, lambda, epsilon, sigma })
    }

    pub fn patch(lambda: T, epsilon: T, sigma: T) -> Result<Self> {
        Self::new(DerivativeOperator::patch(), lambda, epsilon, sigma)
    }

    pub fn operator(&self) -> &DerivativeOperator {
        &self.op
    }

    pub fn weights(&self, c: &[T]) -> Result<IntensityWeights<T>> {
        check_finite(c, "intensity")?;
        IntensityWeights::from_intensity(&self.op, c, self.sigma)
    }

    /// `Q(c) = λ Aᵀ W(c) A + ε I`.
    pub fn precision(&self, c: &[T]) -> Result<PrecisionMatrix<T>> {
        build_dl2int_precision(&self.op, &self.weights(c)?, self.lambda, self.epsilon)
    }

    fn precision_factor(&self, c: &[T]) -> Result<Cholesky<T>> {
        Cholesky::new(&self.precision(c)?.gaussian_precision())
    }

    /// The zero-mean Gaussian `p(d | c)` in covariance form.
    pub fn gaussian(&self, c: &[T]) -> Result<GaussianModel<T>> {
        GaussianModel::from_precision(vec![T::zero(); self.op.pixels()], &self.precision(c)?.gaussian_precision())
    }
}

impl<T: Real> ConditionalDensity<T> for Dl2IntModel<T> {
    fn dim(&self) -> usize {
        self.op.pixels()
    }

    fn conditional_log_density(&self, d: &[T], c: &[T]) -> Result<T> {
        if d.len() != self.dim() {
            return Err(Error::mismatch(format!("disparity of length {} for {} pixels", d.len(), self.dim())));
        }
        check_finite(d, "disparity")?;
        let chol = self.precision_factor(c)?;
        // ln N(d; 0, Λ⁻¹) = -½ dᵀΛd + ½ ln det Λ - (n/2) ln 2π
        let lt: Vec<T> = (0..d.len())
            .map(|i| {
                // (Lᵀ d)_i = Σ_{j >= i} L_ji d_j
                (i..d.len()).map(|j| chol.factor_row(j)[i] * d[j]).sum()
            })
            .collect();
        let half = T::lit(0.5);
        Ok(-half * dot(&lt, &lt) + half * chol.log_det() - half * T::lit(d.len() as f64) * T::ln_2pi())
    }

    fn conditional_sample(&self, c: &[T], rng: &mut SeededRng) -> Result<Vec<T>> {
        let chol = self.precision_factor(c)?;
        // Λ = L Lᵀ, so x = L⁻ᵀ z has covariance Λ⁻¹
        let mut x = standard_normals(rng, self.dim());
        chol.solve_upper_in_place(&mut x);
        Ok(x)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HmmModel<T> {
    intensity: GmmModel<T>,
    disparity: GmmModel<T>,
    transition: Matrix<T>,
}

impl<T: Real> HmmModel<T> {
    pub fn new(intensity: GmmModel<T>, disparity: GmmModel<T>, transition: Matrix<T>) -> Result<Self> {
        if transition.rows() != intensity.k() || transition.cols() != disparity.k() {
            return Err(Error::mismatch(format!(
                "transition is {}x{}, expected {}x{}",
                transition.rows(),
                transition.cols(),
                intensity.k(),
                disparity.k()
            )));
        }
        for r in 0..transition.rows() {
            crate::models::gmm_validate_simplex(transition.row(r), "transition row")?;
        }
        if intensity.dim() != disparity.dim() {
            return Err(Error::mismatch("intensity and disparity mixtures differ in dimension"));
        }
        if intensity.mean().iter().any(|&m| m != T::zero()) {
            return Err(Error::param("intensity mixture must be zero-mean"));
        }
        Ok(Self { intensity, disparity, transition })
    }

    pub fn intensity(&self) -> &GmmModel<T> {
        &self.intensity
    }

    pub fn disparity(&self) -> &GmmModel<T> {
        &self.disparity
    }

    pub fn transition(&self) -> &Matrix<T> {
        &self.transition
    }

    /// Intensity-component posterior for a raw intensity vector (its DC is
    /// removed first).
    pub fn intensity_responsibilities(&self, c: &[T]) -> Result<Vec<T>> {
        check_finite(c, "intensity")?;
        self.intensity.responsibilities(&remove_dc_slice(c))
    }

    /// `rᵀ T` for intensity responsibilities `r`.
    pub fn push_forward(&self, responsibilities: &[T]) -> Vec<T> {
        assert_eq!(responsibilities.len(), self.transition.rows());
        let mut out = vec![T::zero(); self.transition.cols()];
        for (i, &r) in responsibilities.iter().enumerate() {
            if r == T::zero() {
                continue;
            }
            for (o, &t) in out.iter_mut().zip(self.transition.row(i)) {
                *o += r * t;
            }
        }
        out
    }

    /// Disparity mixing weights given intensity `c`.
    pub fn conditional_prior(&self, c: &[T]) -> Result<Vec<T>> {
        Ok(self.push_forward(&self.intensity_responsibilities(c)?))
    }

    /// Disparity weights implied by the intensity mixture's own weights.
    pub fn marginal_disparity_weights(&self) -> Vec<T> {
        self.push_forward(self.intensity.weights())
    }
}

impl<T: Real> ConditionalDensity<T> for HmmModel<T> {
    fn dim(&self) -> usize {
        self.disparity.dim()
    }

    fn conditional_log_density(&self, d: &[T], c: &[T]) -> Result<T> {
        let prior = self.conditional_prior(c)?;
        let log_prior: Vec<T> = prior.iter().map(|p| p.ln()).collect();
        self.disparity.log_density_with_prior(d, &log_prior)
    }

    fn conditional_sample(&self, c: &[T], rng: &mut SeededRng) -> Result<Vec<T>> {
        let prior = self.conditional_prior(c)?;
        let k = GmmModel::draw_component(&prior, rng);
        Ok(self.disparity.sample_component(k, rng))
    }
}
