//! Forward-difference derivative operator and the sparse precision matrices
//! of the hand-crafted quadratic priors.
//!
//! Quadratic priors are written `p(d) ∝ exp(-dᵀ Q d)` with
//! `Q = λ Aᵀ W A + ε I`; as a Gaussian this has precision `Λ = 2Q`.

use crate::error::{Error, Result};
use crate::linalg::{CsrMatrix, Matrix};
use crate::patch::{Patch, PATCH_SIDE};
use crate::scalar::Real;

/// Sparse matrix of forward differences on a `width` x `height` grid.
///
/// Rows come in two blocks: x-derivatives `d(x+1, y) - d(x, y)` for every
/// pixel with a right neighbour (row-major over `(x, y)`), then
/// y-derivatives `d(x, y+1) - d(x, y)` for every pixel with a lower
/// neighbour. No wraparound. Each row holds `(+1 at plus, -1 at minus)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DerivativeOperator {
    width: usize,
    height: usize,
    rows: Vec<(usize, usize)>,
    x_rows: usize,
}

impl DerivativeOperator {
    pub fn new(width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 || width * height < 2 {
            return Err(Error::mismatch(format!("derivative operator needs at least 2 pixels, got {width}x{height}")));
        }
        let mut rows = Vec::with_capacity(2 * width * height);
        for y in 0..height {
            for x in 0..width.saturating_sub(1) {
                let p = y * width + x;
                rows.push((p + 1, p));
            }
        }
        let x_rows = rows.len();
        for y in 0..height.saturating_sub(1) {
            for x in 0..width {
                let p = y * width + x;
                rows.push((p + width, p));
            }
        }
        Ok(Self { width, height, rows, x_rows })
    }

    /// The operator for 8x8 patches.
    pub fn patch() -> Self {
        Self::new(PATCH_SIDE, PATCH_SIDE).expect("8x8 is valid")
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    /// Number of pixels (columns).
    #[inline]
    pub fn pixels(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    pub fn row_count(&self) -> usize {
        self.rows.len()
    }

    #[inline]
    pub fn x_rows(&self) -> usize {
        self.x_rows
    }

    #[inline]
    pub fn y_rows(&self) -> usize {
        self.rows.len() - self.x_rows
    }

    /// `(plus, minus)` pixel indices of every row.
    pub fn row_pairs(&self) -> &[(usize, usize)] {
        &self.rows
    }

    pub fn apply<T: Real>(&self, d: &[T]) -> Vec<T> {
        assert_eq!(d.len(), self.pixels(), "operator applied to wrong length");
        self.rows.iter().map(|&(p, m)| d[p] - d[m]).collect()
    }

    pub fn to_csr<T: Real>(&self) -> CsrMatrix<T> {
        let mut t = Vec::with_capacity(2 * self.rows.len());
        for (r, &(p, m)) in self.rows.iter().enumerate() {
            t.push((r, m, -T::one()));
            t.push((r, p, T::one()));
        }
        CsrMatrix::from_triplets(self.rows.len(), self.pixels(), &t).expect("indices in range")
    }
}

/// Edge-stopping weights `w = exp(-(∂c)² / σ²)` per derivative row.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityWeights<T> {
    pub w_x: Vec<T>,
    pub w_y: Vec<T>,
    pub sigma: T,
}

impl<T: Real> IntensityWeights<T> {
    pub fn from_intensity(op: &DerivativeOperator, intensity: &[T], sigma: T) -> Result<Self> {
        if !(sigma > T::zero()) {
            return Err(Error::param("intensity weight sigma must be positive"));
        }
        if intensity.len() != op.pixels() {
            return Err(Error::mismatch(format!("{} intensity values for {} pixels", intensity.len(), op.pixels())));
        }
        let inv = T::one() / (sigma * sigma);
        let all: Vec<T> = op.apply(intensity).into_iter().map(|g| (-(g * g) * inv).exp()).collect();
        let w_y = all[op.x_rows()..].to_vec();
        let mut w_x = all;
        w_x.truncate(op.x_rows());
        Ok(Self { w_x, w_y, sigma })
    }

    pub fn uniform(op: &DerivativeOperator, value: T, sigma: T) -> Self {
        Self { w_x: vec![value; op.x_rows()], w_y: vec![value; op.y_rows()], sigma }
    }

    pub fn len(&self) -> usize {
        self.w_x.len() + self.w_y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Weight of derivative row `r` (x block first).
    #[inline]
    pub fn get(&self, r: usize) -> T {
        if r < self.w_x.len() {
            self.w_x[r]
        } else {
            self.w_y[r - self.w_x.len()]
        }
    }
}

pub fn build_intensity_weights<T: Real>(c: &Patch<T>, sigma: T) -> Result<IntensityWeights<T>> {
    IntensityWeights::from_intensity(&DerivativeOperator::patch(), c.values(), sigma)
}

/// `Q = λ Aᵀ W A + ε I` in sparse form.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecisionMatrix<T> {
    pub matrix: CsrMatrix<T>,
    pub lambda: T,
    pub epsilon: T,
}

impl<T: Real> PrecisionMatrix<T> {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn to_dense(&self) -> Matrix<T> {
        self.matrix.to_dense()
    }

    /// `dᵀ Q d`.
    pub fn quadratic_form(&self, d: &[T]) -> T {
        let qd = self.matrix.matvec(d);
        qd.iter().zip(d).map(|(&a, &b)| a * b).sum()
    }

    /// Dense Gaussian precision `Λ = 2Q`.
    pub fn gaussian_precision(&self) -> Matrix<T> {
        let mut m = self.to_dense();
        m.scale(T::lit(2.0));
        m
    }
}

fn check_positive<T: Real>(lambda: T, epsilon: T) -> Result<()> {
    if !(lambda > T::zero()) || !lambda.is_finite() {
        return Err(Error::param(format!("lambda must be positive, got {lambda}")));
    }
    if !(epsilon > T::zero()) || !epsilon.is_finite() {
        return Err(Error::param(format!("epsilon must be positive, got {epsilon}")));
    }
    Ok(())
}

fn assemble<T: Real>(op: &DerivativeOperator, weight: impl Fn(usize) -> T, lambda: T, epsilon: T) -> PrecisionMatrix<T> {
    let n = op.pixels();
    let mut t = Vec::with_capacity(4 * op.row_count() + n);
    for (r, &(p, m)) in op.row_pairs().iter().enumerate() {
        let lw = lambda * weight(r);
        t.push((p, p, lw));
        t.push((m, m, lw));
        t.push((p, m, -lw));
        t.push((m, p, -lw));
    }
    for i in 0..n {
        t.push((i, i, epsilon));
    }
    let matrix = CsrMatrix::from_triplets(n, n, &t).expect("indices in range");
    PrecisionMatrix { matrix, lambda, epsilon }
}

/// `λ AᵀA + ε I`.
pub fn build_dl2_precision<T: Real>(op: &DerivativeOperator, lambda: T, epsilon: T) -> Result<PrecisionMatrix<T>> {
    check_positive(lambda, epsilon)?;
    Ok(assemble(op, |_| T::one(), lambda, epsilon))
}

/// `λ Aᵀ W(c) A + ε I`.
pub fn build_dl2int_precision<T: Real>(
    op: &DerivativeOperator,
    weights: &IntensityWeights<T>,
    lambda: T,
    epsilon: T,
) -> Result<PrecisionMatrix<T>> {
    check_positive(lambda, epsilon)?;
    if weights.w_x.len() != op.x_rows() || weights.w_y.len() != op.y_rows() {
        return Err(Error::mismatch(format!(
            "weights ({} + {}) do not match operator rows ({} + {})",
            weights.w_x.len(),
            weights.w_y.len(),
            op.x_rows(),
            op.y_rows()
        )));
    }
    Ok(assemble(op, |r| weights.get(r), lambda, epsilon))
}
