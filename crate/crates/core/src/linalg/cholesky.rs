use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::{axpy, dot, Real};

/// Lower-triangular Cholesky factor `L` with `A = L Lᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cholesky<T> {
    n: usize,
    // row-major n x n, upper triangle zero
    l: Vec<T>,
}

impl<T: Real> Cholesky<T> {
    /// Factorizes a symmetric positive-definite matrix. Only the lower
    /// triangle of `a` is read.
    pub fn new(a: &Matrix<T>) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::mismatch(format!("cholesky of {}x{}", a.rows(), a.cols())));
        }
        let n = a.rows();
        let mut l = vec![T::zero(); n * n];
        for j in 0..n {
            let row_j = &l[j * n..j * n + j];
            let d = a[(j, j)] - dot(row_j, row_j);
            if !(d > T::zero()) || !d.is_finite() {
                return Err(Error::NotPositiveDefinite { pivot: j });
            }
            let ljj = d.sqrt();
            l[j * n + j] = ljj;
            for i in (j + 1)..n {
                let s = dot(&l[i * n..i * n + j], &l[j * n..j * n + j]);
                l[i * n + j] = (a[(i, j)] - s) / ljj;
            }
        }
        Ok(Self { n, l })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn factor_row(&self, i: usize) -> &[T] {
        &self.l[i * self.n..i * self.n + i + 1]
    }

    pub fn factor(&self) -> Matrix<T> {
        Matrix::from_row_major(self.n, self.n, self.l.clone()).expect("square factor")
    }

    /// `ln det A = 2 Σ ln L_ii`.
    pub fn log_det(&self) -> T {
        let two = T::one() + T::one();
        two * (0..self.n).map(|i| self.l[i * self.n + i].ln()).sum::<T>()
    }

    /// Solves `L z = b` in place.
    pub fn solve_lower_in_place(&self, b: &mut [T]) {
        assert_eq!(b.len(), self.n);
        let n = self.n;
        for i in 0..n {
            let s = dot(&self.l[i * n..i * n + i], &b[..i]);
            b[i] = (b[i] - s) / self.l[i * n + i];
        }
    }

    /// Solves `Lᵀ x = z` in place.
    pub fn solve_upper_in_place(&self, z: &mut [T]) {
        assert_eq!(z.len(), self.n);
        let n = self.n;
        for i in (0..n).rev() {
            let xi = z[i] / self.l[i * n + i];
            z[i] = xi;
            let (head, _) = z.split_at_mut(i);
            axpy(head, -xi, &self.l[i * n..i * n + i]);
        }
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let mut x = b.to_vec();
        self.solve_lower_in_place(&mut x);
        self.solve_upper_in_place(&mut x);
        x
    }

    /// `bᵀ A⁻¹ b = ‖L⁻¹ b‖²`.
    pub fn inverse_quadratic_form(&self, b: &[T]) -> T {
        let mut z = b.to_vec();
        self.solve_lower_in_place(&mut z);
        dot(&z, &z)
    }

    /// `L z` for a vector `z` (used to draw correlated Gaussian samples).
    pub fn lower_mul(&self, z: &[T]) -> Vec<T> {
        assert_eq!(z.len(), self.n);
        (0..self.n).map(|i| dot(&self.l[i * self.n..i * self.n + i + 1], &z[..=i])).collect()
    }

    pub fn inverse(&self) -> Matrix<T> {
        let n = self.n;
        let mut inv = Matrix::zeros(n, n);
        let mut col = vec![T::zero(); n];
        for c in 0..n {
            col.iter_mut().for_each(|v| *v = T::zero());
            col[c] = T::one();
            self.solve_lower_in_place(&mut col);
            self.solve_upper_in_place(&mut col);
            for r in 0..n {
                inv[(r, c)] = col[r];
            }
        }
        inv.symmetrize_from_lower();
        inv
    }

    /// `tr(A⁻¹) = ‖L⁻¹‖²_F`.
    pub fn inverse_trace(&self) -> T {
        let n = self.n;
        let mut total = T::zero();
        let mut col = vec![T::zero(); n];
        for c in 0..n {
            col.iter_mut().for_each(|v| *v = T::zero());
            col[c] = T::one();
            // L⁻¹ e_c is zero above row c
            for i in c..n {
                let s = dot(&self.l[i * n + c..i * n + i], &col[c..i]);
                col[i] = (col[i] - s) / self.l[i * n + i];
            }
            total += dot(&col[c..], &col[c..]);
        }
        total
    }

    /// Forward substitution `L Z = X` on a block of `width` right-hand sides
    /// stored dimension-major (`block[i * width + j]` is coordinate `i` of
    /// column `j`). Each inner update is a contiguous axpy over the columns.
    pub fn solve_lower_block(&self, block: &mut [T], width: usize) {
        let n = self.n;
        assert_eq!(block.len(), n * width);
        for i in 0..n {
            let (done, rest) = block.split_at_mut(i * width);
            let row = &mut rest[..width];
            let lrow = &self.l[i * n..i * n + i];
            for (j, &c) in lrow.iter().enumerate() {
                if c != T::zero() {
                    axpy(row, -c, &done[j * width..(j + 1) * width]);
                }
            }
            let inv = T::one() / self.l[i * n + i];
            row.iter_mut().for_each(|v| *v *= inv);
        }
    }
}
