use crate::error::{Error, Result};
use crate::scalar::{dot, Real};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::mismatch(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn diagonal(values: &[T]) -> Self {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)])
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.cols, "matvec dimension");
        (0..self.rows).map(|r| dot(self.row(r), x)).collect()
    }

    pub fn matmul(&self, other: &Matrix<T>) -> Matrix<T> {
        assert_eq!(self.cols, other.rows, "matmul dimension");
        let mut out = Matrix::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            let out_row = &mut out.data[r * other.cols..(r + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[r * self.cols + k];
                if a == T::zero() {
                    continue;
                }
                for (o, &b) in out_row.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// `xᵀ M x`.
    pub fn quadratic_form(&self, x: &[T]) -> T {
        assert!(self.is_square() && x.len() == self.rows);
        (0..self.rows).map(|r| x[r] * dot(self.row(r), x)).sum()
    }

    pub fn add_to_diagonal(&mut self, value: T) {
        for i in 0..self.rows.min(self.cols) {
            self[(i, i)] += value;
        }
    }

    pub fn scale(&mut self, factor: T) {
        for v in &mut self.data {
            *v *= factor;
        }
    }

    pub fn trace(&self) -> T {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    /// Largest absolute difference between `self` and its transpose.
    pub fn asymmetry(&self) -> T {
        let mut worst = T::zero();
        for r in 0..self.rows {
            for c in (r + 1)..self.cols {
                worst = worst.max((self[(r, c)] - self[(c, r)]).abs());
            }
        }
        worst
    }

    /// Copies the lower triangle onto the upper one.
    pub fn symmetrize_from_lower(&mut self) {
        for r in 0..self.rows {
            for c in (r + 1)..self.cols {
                self.data[r * self.cols + c] = self.data[c * self.cols + r];
            }
        }
    }

    pub fn select(&self, rows: &[usize], cols: &[usize]) -> Matrix<T> {
        Matrix::from_fn(rows.len(), cols.len(), |r, c| self[(rows[r], cols[c])])
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map<U: Real>(&self, f: impl Fn(T) -> U) -> Matrix<U> {
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    /// Leading eigenpair of a symmetric positive semi-definite matrix by
    /// power iteration. Deterministic start vector.
    pub fn leading_eigenpair(&self, iterations: usize) -> (T, Vec<T>) {
        assert!(self.is_square());
        let n = self.rows;
        let mut v: Vec<T> = (0..n).map(|i| T::one() + T::lit(i as f64 * 1e-3)).collect();
        let norm = dot(&v, &v).sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
        let mut value = T::zero();
        for _ in 0..iterations {
            let w = self.matvec(&v);
            let norm = dot(&w, &w).sqrt();
            if norm == T::zero() {
                return (T::zero(), v);
            }
            value = dot(&v, &w);
            v = w.into_iter().map(|x| x / norm).collect();
        }
        (value, v)
    }
}

impl<T> std::ops::Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &T {
        &self.data[r * self.cols + c]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut T {
        &mut self.data[r * self.cols + c]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_against_identity() {
        let a = Matrix::from_fn(3, 3, |r, c| (r * 3 + c) as f64);
        assert_eq!(a.matmul(&Matrix::identity(3)), a);
    }

    #[test]
    fn quadratic_form_of_diagonal() {
        let m = Matrix::diagonal(&[1.0, 2.0, 3.0]);
        assert_eq!(m.quadratic_form(&[1.0, 1.0, 2.0]), 1.0 + 2.0 + 12.0);
    }

    #[test]
    fn power_iteration_finds_dominant_axis() {
        let m = Matrix::<f64>::diagonal(&[1.0, 5.0, 2.0]);
        let (value, vec) = m.leading_eigenpair(200);
        assert!((value - 5.0).abs() < 1e-9);
        assert!((vec[1].abs() - 1.0).abs() < 1e-9);
    }
}
