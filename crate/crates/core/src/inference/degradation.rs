use crate::error::{Error, Result};
use crate::models::{standard_normals, SeededRng};
use crate::patch::{PATCH_LEN, PATCH_SIDE};
use crate::scalar::Real;

/// Noise variance used for "noiseless" observations.
pub const NOISE_FLOOR: f64 = 1e-12;

/// Visible pixels `(x, y)` of the corner inpainting task: two in the
/// top-left corner and two in the bottom-right.
pub const CORNER_PIXELS: [(usize, usize); 4] = [(0, 0), (1, 0), (PATCH_SIDE - 2, PATCH_SIDE - 1), (PATCH_SIDE - 1, PATCH_SIDE - 1)];

/// Per-pixel Gaussian noise on an observed subset; hidden pixels carry no
/// information and their values are never read.
#[derive(Debug, Clone, PartialEq)]
pub struct DegradationSpec<T> {
    noise_var: Vec<T>,
    observed: Vec<bool>,
}

impl<T: Real> DegradationSpec<T> {
    pub fn new(noise_var: Vec<T>, observed: Vec<bool>) -> Result<Self> {
        if noise_var.len() != observed.len() {
            return Err(Error::mismatch(format!("{} variances for {} pixels", noise_var.len(), observed.len())));
        }
        for (v, &o) in noise_var.iter().zip(&observed) {
            if o && (!v.is_finite() || *v < T::zero()) {
                return Err(Error::param(format!("noise variance {v} on an observed pixel")));
            }
        }
        Ok(Self { noise_var, observed })
    }

    /// All pixels observed with noise standard deviation `sigma`.
    pub fn denoise(dim: usize, sigma: T) -> Result<Self> {
        Self::new(vec![sigma * sigma; dim], vec![true; dim])
    }

    /// Only `visible` pixels observed, at the noise floor.
    pub fn inpaint(dim: usize, visible: &[usize]) -> Result<Self> {
        let mut observed = vec![false; dim];
        for &i in visible {
            *observed.get_mut(i).ok_or_else(|| Error::param(format!("visible pixel {i} outside {dim} pixels")))? = true;
        }
        Self::new(vec![T::lit(NOISE_FLOOR); dim], observed)
    }

    /// The 8x8 inpainting task with only [`CORNER_PIXELS`] visible.
    pub fn corner_inpaint() -> Self {
        let visible: Vec<usize> = CORNER_PIXELS.iter().map(|&(x, y)| y * PATCH_SIDE + x).collect();
        Self::inpaint(PATCH_LEN, &visible).expect("corners inside patch")
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.observed.len()
    }

    #[inline]
    pub fn noise_var(&self) -> &[T] {
        &self.noise_var
    }

    #[inline]
    pub fn observed(&self) -> &[bool] {
        &self.observed
    }

    pub fn observed_indices(&self) -> Vec<usize> {
        (0..self.dim()).filter(|&i| self.observed[i]).collect()
    }

    /// Adds noise to observed pixels; hidden pixels are set to zero.
    pub fn degrade(&self, clean: &[T], rng: &mut SeededRng) -> Vec<T> {
        assert_eq!(clean.len(), self.dim());
        let z: Vec<T> = standard_normals(rng, self.dim());
        (0..self.dim())
            .map(|i| if self.observed[i] { clean[i] + self.noise_var[i].sqrt() * z[i] } else { T::zero() })
            .collect()
    }

    pub(crate) fn check_input(&self, y: &[T]) -> Result<()> {
        if y.len() != self.dim() {
            return Err(Error::mismatch(format!("observation of length {} for {} pixels", y.len(), self.dim())));
        }
        if y.iter().zip(&self.observed).any(|(v, &o)| o && !v.is_finite()) {
            return Err(Error::NonFinite("observation"));
        }
        Ok(())
    }
}
