//! Minimal CSR storage for real square system samples.
//!
//! This is deliberately small: the solvers only need construction from
//! triplets (Matrix Market order is arbitrary), matrix-vector products on real
//! and complex slices, and densification for factorization. Anything smarter
//! belongs in a real sparse package.

use crate::{Error, Result};
use nalgebra::DMatrix;
use num_complex::Complex64;

#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from (row, col, value) triplets; duplicates are summed.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<Self> {
        for &(r, c, _) in triplets {
            if r >= nrows || c >= ncols {
                return Err(Error::InvalidArgument(format!(
                    "triplet ({r}, {c}) outside a {nrows}x{ncols} matrix"
                )));
            }
        }
        let mut sorted: Vec<(usize, usize, f64)> = triplets.to_vec();
        sorted.sort_by_key(|&(r, c, _)| (r, c));

        let mut indptr = vec![0usize; nrows + 1];
        let mut indices = Vec::with_capacity(sorted.len());
        let mut values: Vec<f64> = Vec::with_capacity(sorted.len());
        for &(r, c, v) in &sorted {
            if indices.len() > indptr[r] && *indices.last().unwrap() == c && indptr[r + 1] > 0 {
                *values.last_mut().unwrap() += v;
            } else {
                indices.push(c);
                values.push(v);
            }
            indptr[r + 1] = indices.len();
        }
        // rows without entries inherit the running offset
        for r in 0..nrows {
            if indptr[r + 1] < indptr[r] {
                indptr[r + 1] = indptr[r];
            }
        }
        let mut fixed = vec![0usize; nrows + 1];
        let mut last = 0;
        for r in 0..nrows {
            let end = indptr[r + 1].max(last);
            fixed[r + 1] = end;
            last = end;
        }
        Ok(Self {
            nrows,
            ncols,
            indptr: fixed,
            indices,
            values,
        })
    }

    pub fn from_dense(m: &DMatrix<f64>) -> Self {
        let mut triplets = Vec::new();
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                if m[(r, c)] != 0.0 {
                    triplets.push((r, c, m[(r, c)]));
                }
            }
        }
        Self::from_triplets(m.nrows(), m.ncols(), &triplets).unwrap()
    }

    pub fn identity(n: usize) -> Self {
        let triplets: Vec<(usize, usize, f64)> = (0..n).map(|i| (i, i, 1.0)).collect();
        Self::from_triplets(n, n, &triplets).unwrap()
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |r| {
            (self.indptr[r]..self.indptr[r + 1]).map(move |k| (r, self.indices[k], self.values[k]))
        })
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for (r, c, v) in self.triplets() {
            m[(r, c)] = v;
        }
        m
    }

    pub fn transpose(&self) -> CsrMatrix {
        let t: Vec<(usize, usize, f64)> = self.triplets().map(|(r, c, v)| (c, r, v)).collect();
        Self::from_triplets(self.ncols, self.nrows, &t).unwrap()
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        for r in 0..self.nrows {
            let mut acc = 0.0;
            for k in self.indptr[r]..self.indptr[r + 1] {
                acc += self.values[k] * x[self.indices[k]];
            }
            y[r] = acc;
        }
    }

    pub fn matvec_complex(&self, x: &[Complex64], y: &mut [Complex64]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        for r in 0..self.nrows {
            let mut acc = Complex64::new(0.0, 0.0);
            for k in self.indptr[r]..self.indptr[r + 1] {
                acc += x[self.indices[k]] * self.values[k];
            }
            y[r] = acc;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn triplets_roundtrip_and_duplicates_sum() {
        let t = [(0, 1, 2.0), (2, 0, -1.0), (0, 1, 0.5), (1, 1, 3.0)];
        let m = CsrMatrix::from_triplets(3, 3, &t).unwrap();
        assert_eq!(m.nnz(), 3);
        let d = m.to_dense();
        assert_eq!(d[(0, 1)], 2.5);
        assert_eq!(d[(2, 0)], -1.0);
        assert_eq!(d[(1, 1)], 3.0);
        assert_eq!(d[(0, 0)], 0.0);
        assert!(CsrMatrix::from_triplets(2, 2, &[(2, 0, 1.0)]).is_err());
    }

    #[test]
    fn matvec_matches_dense() {
        let d = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 2.0, 0.0, 0.0, -1.0, 4.0, 5.0, 0.0]);
        let s = CsrMatrix::from_dense(&d);
        let x = [1.0, -2.0, 3.0];
        let mut y = [0.0; 3];
        s.matvec(&x, &mut y);
        let want = d * DMatrix::from_column_slice(3, 1, &x);
        for i in 0..3 {
            assert_relative_eq!(y[i], want[(i, 0)]);
        }

        let xc: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 2.0 * v)).collect();
        let mut yc = vec![Complex64::new(0.0, 0.0); 3];
        s.matvec_complex(&xc, &mut yc);
        for i in 0..3 {
            assert_relative_eq!(yc[i].re, want[(i, 0)]);
            assert_relative_eq!(yc[i].im, 2.0 * want[(i, 0)]);
        }
    }

    #[test]
    fn transpose_swaps_the_action() {
        let d = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 2.0, -3.0, 4.0, 0.0]);
        let t = CsrMatrix::from_dense(&d).transpose();
        assert_eq!(t.nrows(), 3);
        assert_eq!(t.ncols(), 2);
        assert_eq!(t.to_dense(), d.transpose());
    }

    #[test]
    fn empty_rows_are_preserved() {
        let m = CsrMatrix::from_triplets(4, 4, &[(3, 3, 1.0)]).unwrap();
        let x = [1.0; 4];
        let mut y = [9.0; 4];
        m.matvec(&x, &mut y);
        assert_eq!(y, [0.0, 0.0, 0.0, 1.0]);
    }
}
