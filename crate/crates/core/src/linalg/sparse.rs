use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Real;

/// Compressed sparse row matrix with sorted column indices per row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix<T> {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<T>,
}

impl<T: Real> CsrMatrix<T> {
    /// Builds a matrix from `(row, col, value)` triplets. Duplicates are
    /// summed in the order they appear, so the result is independent of
    /// anything but the triplet sequence.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, T)]) -> Result<Self> {
        if let Some(&(r, c, _)) = triplets.iter().find(|(r, c, _)| *r >= nrows || *c >= ncols) {
            return Err(Error::mismatch(format!("triplet ({r},{c}) outside {nrows}x{ncols}")));
        }
        let mut order: Vec<usize> = (0..triplets.len()).collect();
        // stable: equal (row, col) keep their insertion order
        order.sort_by_key(|&i| (triplets[i].0, triplets[i].1));

        let mut indptr = vec![0usize; nrows + 1];
        let mut indices = Vec::with_capacity(triplets.len());
        let mut values: Vec<T> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for &i in &order {
            let (r, c, v) = triplets[i];
            if last == Some((r, c)) {
                *values.last_mut().expect("entry exists") += v;
            } else {
                indices.push(c);
                values.push(v);
                indptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..nrows {
            indptr[r + 1] += indptr[r];
        }
        Ok(Self { nrows, ncols, indptr, indices, values })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            nrows: n,
            ncols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            values: vec![T::one(); n],
        }
    }

    #[inline]
    pub fn nrows(&self) -> usize {
        self.nrows
    }

    #[inline]
    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Iterates `(col, value)` pairs of one row.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let span = self.indptr[r]..self.indptr[r + 1];
        self.indices[span.clone()].iter().copied().zip(self.values[span].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        self.row(r).find(|&(col, _)| col == c).map_or(T::zero(), |(_, v)| v)
    }

    pub fn matvec_into(&self, x: &[T], out: &mut [T]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(out.len(), self.nrows);
        for (r, o) in out.iter_mut().enumerate() {
            let mut s = T::zero();
            for k in self.indptr[r]..self.indptr[r + 1] {
                s += self.values[k] * x[self.indices[k]];
            }
            *o = s;
        }
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.nrows];
        self.matvec_into(x, &mut out);
        out
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).collect()
    }

    pub fn to_dense(&self) -> Matrix<T> {
        let mut m = Matrix::zeros(self.nrows, self.ncols);
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                m[(r, c)] += v;
            }
        }
        m
    }

    /// Largest `|A_ij - A_ji|`.
    pub fn asymmetry(&self) -> T {
        let mut worst = T::zero();
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                worst = worst.max((v - self.get(c, r)).abs());
            }
        }
        worst
    }

    /// Principal submatrix on `keep` (global indices, in the given order).
    /// Returns the submatrix and, for each kept row, the entries that fall
    /// outside `keep` as `(global col, value)`.
    pub fn split_principal(&self, keep: &[usize]) -> (CsrMatrix<T>, Vec<Vec<(usize, T)>>) {
        let mut local = vec![usize::MAX; self.ncols];
        for (i, &g) in keep.iter().enumerate() {
            local[g] = i;
        }
        let mut triplets = Vec::new();
        let mut outside = Vec::with_capacity(keep.len());
        for (i, &g) in keep.iter().enumerate() {
            let mut rest = Vec::new();
            for (c, v) in self.row(g) {
                if local[c] != usize::MAX {
                    triplets.push((i, local[c], v));
                } else {
                    rest.push((c, v));
                }
            }
            outside.push(rest);
        }
        let sub = CsrMatrix::from_triplets(keep.len(), keep.len(), &triplets).expect("indices in range");
        (sub, outside)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicates_are_summed() {
        let m = CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (1, 1, 2.0), (0, 0, 0.5), (0, 1, -1.0)]).unwrap();
        assert_eq!(m.nnz(), 3);
        assert_eq!(m.get(0, 0), 1.5);
        assert_eq!(m.matvec(&[1.0, 1.0]), vec![0.5, 2.0]);
    }

    #[test]
    fn out_of_range_triplet_rejected() {
        assert!(CsrMatrix::<f64>::from_triplets(2, 2, &[(2, 0, 1.0)]).is_err());
    }

    #[test]
    fn principal_split() {
        let dense = [[4.0, -1.0, 0.0], [-1.0, 4.0, -1.0], [0.0, -1.0, 4.0]];
        let mut t = Vec::new();
        for r in 0..3 {
            for c in 0..3 {
                if dense[r][c] != 0.0 {
                    t.push((r, c, dense[r][c]));
                }
            }
        }
        let m = CsrMatrix::from_triplets(3, 3, &t).unwrap();
        let (sub, outside) = m.split_principal(&[2, 1]);
        assert_eq!(sub.to_dense().as_slice(), &[4.0, -1.0, -1.0, 4.0]);
        assert_eq!(outside[0], vec![]);
        assert_eq!(outside[1], vec![(0, -1.0)]);
    }
}
