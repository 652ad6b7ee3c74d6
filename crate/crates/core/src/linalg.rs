//! Symmetric positive-definite solver on a variable-band (skyline) profile.
//!
//! Rows are stored from their first structural nonzero up to the diagonal,
//! so fill-in stays inside the envelope and the factorization is exact.

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is not positive definite (pivot {pivot} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },
    #[error("entry ({row}, {col}) lies outside the matrix profile")]
    OutsideProfile { row: usize, col: usize },
}

/// Lower triangle of a symmetric matrix in row-wise skyline storage.
#[derive(Clone, Debug)]
pub struct SkylineMatrix {
    n: usize,
    first: Vec<usize>,
    offset: Vec<usize>,
    data: Vec<f64>,
    factored: bool,
}

impl SkylineMatrix {
    /// `first[i]` is the column of the first nonzero in row `i` (`<= i`).
    pub fn with_profile(first: Vec<usize>) -> Self {
        let n = first.len();
        let mut offset = Vec::with_capacity(n + 1);
        let mut total = 0;
        for (i, &f) in first.iter().enumerate() {
            debug_assert!(f <= i);
            offset.push(total);
            total += i - f + 1;
        }
        offset.push(total);
        SkylineMatrix { n, first, offset, data: vec![0.0; total], factored: false }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn stored_entries(&self) -> usize {
        self.data.len()
    }

    #[inline]
    fn index(&self, row: usize, col: usize) -> Option<usize> {
        let (r, c) = if col > row { (col, row) } else { (row, col) };
        if c < self.first[r] {
            None
        } else {
            Some(self.offset[r] + c - self.first[r])
        }
    }

    /// Adds `v` to entry `(row, col)`; the symmetric partner is implied.
    pub fn add(&mut self, row: usize, col: usize, v: f64) -> Result<(), LinalgError> {
        let k = self.index(row, col).ok_or(LinalgError::OutsideProfile { row, col })?;
        self.data[k] += v;
        Ok(())
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.index(row, col).map_or(0.0, |k| self.data[k])
    }

    /// In-place Cholesky `A = L L^T`.
    pub fn factor(&mut self) -> Result<(), LinalgError> {
        for i in 0..self.n {
            let fi = self.first[i];
            let oi = self.offset[i];
            for j in fi..=i {
                let fj = self.first[j];
                let oj = self.offset[j];
                let k0 = fi.max(fj);
                let mut s = self.data[oi + j - fi];
                for k in k0..j {
                    s -= self.data[oi + k - fi] * self.data[oj + k - fj];
                }
                if j < i {
                    s /= self.data[oj + j - fj];
                    self.data[oi + j - fi] = s;
                } else {
                    if !(s > 0.0) || !s.is_finite() {
                        return Err(LinalgError::NotPositiveDefinite { row: i, pivot: s });
                    }
                    self.data[oi + i - fi] = libm::sqrt(s);
                }
            }
        }
        self.factored = true;
        Ok(())
    }

    /// Solves `A x = b` after [`factor`](Self::factor), overwriting `b`.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        assert!(self.factored, "solve called before factor");
        assert_eq!(b.len(), self.n);
        for i in 0..self.n {
            let fi = self.first[i];
            let oi = self.offset[i];
            let mut s = b[i];
            for k in fi..i {
                s -= self.data[oi + k - fi] * b[k];
            }
            b[i] = s / self.data[oi + i - fi];
        }
        for i in (0..self.n).rev() {
            let fi = self.first[i];
            let oi = self.offset[i];
            b[i] /= self.data[oi + i - fi];
            let bi = b[i];
            for k in fi..i {
                b[k] -= self.data[oi + k - fi] * bi;
            }
        }
    }
}
