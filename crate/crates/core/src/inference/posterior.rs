use crate::conditional::{Dl2IntModel, HmmModel};
use crate::error::{Error, Result};
use crate::inference::{DegradationSpec, Method, RestorationResult};
use crate::linalg::{Cholesky, Matrix};
use crate::models::{CovarianceFactor, GaussianModel, GmmModel};
use crate::scalar::{dot, log_sum_exp, Real};

/// Components whose posterior weight is below this do not contribute to
/// the BLS blend.
const NEGLIGIBLE_WEIGHT: f64 = 1e-16;

/// One Gaussian component conditioned on a fixed observation pattern.
///
/// With observed set `O` and `S = Σ_OO + diag(v_O)`, the posterior mean is
/// `μ + Σ_{:,O} S⁻¹ (y_O - μ_O)` and the evidence is `N(y_O; μ_O, S)`.
#[derive(Debug, Clone)]
struct PreparedComponent<T> {
    chol: Cholesky<T>,
    // Σ_{:,O}, n x m
    cross: Matrix<T>,
    log_norm: T,
}

impl<T: Real> PreparedComponent<T> {
    fn new(factor: &CovarianceFactor<T>, observed: &[usize], noise_var: &[T]) -> Result<Self> {
        let cov = factor.covariance();
        let m = observed.len();
        let mut s = cov.select(observed, observed);
        for (j, &o) in observed.iter().enumerate() {
            s[(j, j)] += noise_var[o];
        }
        let chol = Cholesky::new(&s)?;
        let all: Vec<usize> = (0..cov.rows()).collect();
        let cross = cov.select(&all, observed);
        let log_norm = -T::lit(0.5) * (chol.log_det() + T::lit(m as f64) * T::ln_2pi());
        Ok(Self { chol, cross, log_norm })
    }

    /// Whitened residual `L⁻¹ r` and the log-evidence.
    fn evidence(&self, residual: &[T]) -> (Vec<T>, T) {
        let mut z = residual.to_vec();
        self.chol.solve_lower_in_place(&mut z);
        let ll = self.log_norm - T::lit(0.5) * dot(&z, &z);
        (z, ll)
    }

    /// Adds `weight · Σ_{:,O} S⁻¹ r` given the whitened residual.
    fn add_posterior_mean(&self, whitened: &[T], weight: T, out: &mut [T]) {
        let mut s = whitened.to_vec();
        self.chol.solve_upper_in_place(&mut s);
        for (r, o) in out.iter_mut().enumerate() {
            *o += weight * dot(self.cross.row(r), &s);
        }
    }
}

/// Posterior of a shared-mean Gaussian mixture for one degradation
/// pattern; reusable across every observation with that pattern.
#[derive(Debug, Clone)]
pub struct PreparedMixture<T> {
    mean: Vec<T>,
    observed: Vec<usize>,
    components: Vec<PreparedComponent<T>>,
}

/// Output of [`PreparedMixture::posterior`].
#[derive(Debug, Clone, PartialEq)]
pub struct MixturePosterior<T> {
    pub bls: Vec<T>,
    /// Posterior mean of the most responsible component.
    pub map: Vec<T>,
    pub map_component: usize,
    pub weights: Vec<T>,
}

impl<T: Real> PreparedMixture<T> {
    pub fn new(mean: &[T], factors: &[CovarianceFactor<T>], spec: &DegradationSpec<T>) -> Result<Self> {
        if mean.len() != spec.dim() {
            return Err(Error::mismatch(format!("{}-pixel degradation for a {}-dim model", spec.dim(), mean.len())));
        }
        let observed = spec.observed_indices();
        let components = factors
            .iter()
            .map(|f| PreparedComponent::new(f, &observed, spec.noise_var()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { mean: mean.to_vec(), observed, components })
    }

    pub fn for_gmm(model: &GmmModel<T>, spec: &DegradationSpec<T>) -> Result<Self> {
        Self::new(model.mean(), model.components(), spec)
    }

    pub fn for_gaussian(model: &GaussianModel<T>, spec: &DegradationSpec<T>) -> Result<Self> {
        Self::new(model.mean(), std::slice::from_ref(model.factor()), spec)
    }

    #[inline]
    pub fn k(&self) -> usize {
        self.components.len()
    }

    /// Posterior given observation `y` and component log-prior `log_prior`
    /// (`-∞` entries allowed). Hidden entries of `y` are ignored.
    pub fn posterior(&self, y: &[T], log_prior: &[T]) -> Result<MixturePosterior<T>> {
        if y.len() != self.mean.len() {
            return Err(Error::mismatch(format!("observation of length {} for a {}-dim model", y.len(), self.mean.len())));
        }
        if log_prior.len() != self.k() {
            return Err(Error::mismatch(format!("{} prior entries for {} components", log_prior.len(), self.k())));
        }
        let residual: Vec<T> = self.observed.iter().map(|&o| y[o] - self.mean[o]).collect();
        if residual.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("observation"));
        }
        let mut whitened = Vec::with_capacity(self.k());
        let mut terms = Vec::with_capacity(self.k());
        for (c, &lp) in self.components.iter().zip(log_prior) {
            if lp == T::neg_infinity() {
                whitened.push(Vec::new());
                terms.push(lp);
            } else {
                let (z, ll) = c.evidence(&residual);
                whitened.push(z);
                terms.push(lp + ll);
            }
        }
        let lse = log_sum_exp(&terms);
        if !lse.is_finite() {
            return Err(Error::NonFinite("posterior normalizer"));
        }
        for t in terms.iter_mut() {
            *t = (*t - lse).exp();
        }
        let weights = terms;
        let mut map_component = 0;
        for (k, &w) in weights.iter().enumerate() {
            if w > weights[map_component] {
                map_component = k;
            }
        }
        let n = self.mean.len();
        let mut bls = vec![T::zero(); n];
        let negligible = T::lit(NEGLIGIBLE_WEIGHT);
        for ((c, z), &w) in self.components.iter().zip(&whitened).zip(&weights) {
            if w >= negligible {
                c.add_posterior_mean(z, w, &mut bls);
            }
        }
        // weights sum to one, so the shared mean enters once
        for (b, &m) in bls.iter_mut().zip(&self.mean) {
            *b += m;
        }
        let mut map = self.mean.clone();
        self.components[map_component].add_posterior_mean(&whitened[map_component], T::one(), &mut map);
        Ok(MixturePosterior { bls, map, map_component, weights })
    }
}

/// Exact posterior mean of a Gaussian prior.
pub fn bls_gaussian<T: Real>(model: &GaussianModel<T>, y: &[T], spec: &DegradationSpec<T>) -> Result<RestorationResult<T>> {
    spec.check_input(y)?;
    let post = PreparedMixture::for_gaussian(model, spec)?.posterior(y, &[T::zero()])?;
    Ok(RestorationResult { estimate: post.bls, posterior_weights: None, method: Method::Bls, converged: true })
}

/// Posterior mean under the DL2|int Gaussian induced by intensity `c`.
pub fn bls_dl2int<T: Real>(model: &Dl2IntModel<T>, c: &[T], y: &[T], spec: &DegradationSpec<T>) -> Result<RestorationResult<T>> {
    bls_gaussian(&model.gaussian(c)?, y, spec)
}

fn mixture_result<T: Real>(post: MixturePosterior<T>, method: Method) -> RestorationResult<T> {
    let estimate = match method {
        Method::Map => post.map,
        _ => post.bls,
    };
    RestorationResult { estimate, posterior_weights: Some(post.weights), method, converged: true }
}

pub fn bls_gmm<T: Real>(model: &GmmModel<T>, y: &[T], spec: &DegradationSpec<T>) -> Result<RestorationResult<T>> {
    spec.check_input(y)?;
    let post = PreparedMixture::for_gmm(model, spec)?.posterior(y, model.log_weights())?;
    Ok(mixture_result(post, Method::Bls))
}

/// Hard-assignment MAP surrogate: the posterior mean of the component with
/// the largest posterior weight (lowest index on ties).
pub fn map_gmm<T: Real>(model: &GmmModel<T>, y: &[T], spec: &DegradationSpec<T>) -> Result<RestorationResult<T>> {
    spec.check_input(y)?;
    let post = PreparedMixture::for_gmm(model, spec)?.posterior(y, model.log_weights())?;
    Ok(mixture_result(post, Method::Map))
}

pub(crate) fn hmm_log_prior<T: Real>(model: &HmmModel<T>, c: &[T]) -> Result<Vec<T>> {
    Ok(model.conditional_prior(c)?.into_iter().map(|p| p.ln()).collect())
}

pub fn bls_hmm<T: Real>(model: &HmmModel<T>, c: &[T], y: &[T], spec: &DegradationSpec<T>) -> Result<RestorationResult<T>> {
    spec.check_input(y)?;
    let post = PreparedMixture::for_gmm(model.disparity(), spec)?.posterior(y, &hmm_log_prior(model, c)?)?;
    Ok(mixture_result(post, Method::Bls))
}

pub fn map_hmm<T: Real>(model: &HmmModel<T>, c: &[T], y: &[T], spec: &DegradationSpec<T>) -> Result<RestorationResult<T>> {
    spec.check_input(y)?;
    let post = PreparedMixture::for_gmm(model.disparity(), spec)?.posterior(y, &hmm_log_prior(model, c)?)?;
    Ok(mixture_result(post, Method::Map))
}
