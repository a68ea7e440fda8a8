//! Symmetric positive-definite solver over a row envelope (skyline) layout.
//!
//! Row `i` stores columns `first[i]..=i` of the lower triangle. Cholesky
//! factorization produces no fill outside the envelope, so banded systems with
//! a few dense trailing rows stay cheap.

use alloc::vec;
use alloc::vec::Vec;

pub struct Skyline {
    first: Vec<usize>,
    rows: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NotPositiveDefinite {
    pub row: usize,
    pub pivot: f64,
}

impl Skyline {
    pub fn new(first: Vec<usize>) -> Self {
        let rows = first.iter().enumerate().map(|(i, &f)| vec![0.0; i + 1 - f]).collect();
        Self { first, rows }
    }

    pub fn dim(&self) -> usize {
        self.first.len()
    }

    pub fn clear(&mut self) {
        for r in &mut self.rows {
            r.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    /// Adds `value` at `(i, j)`, `j <= i`. Panics outside the envelope.
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, value: f64) {
        debug_assert!(j <= i);
        let f = self.first[i];
        assert!(j >= f, "entry ({i}, {j}) outside envelope");
        self.rows[i][j - f] += value;
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if j > i { (j, i) } else { (i, j) };
        let f = self.first[i];
        if j < f {
            0.0
        } else {
            self.rows[i][j - f]
        }
    }

    pub fn diagonal(&self, i: usize) -> f64 {
        self.get(i, i)
    }

    /// In-place `L Lᵀ` factorization. A pivot at or below `relative_tol`
    /// times the original diagonal entry is reported as a failure.
    pub fn factorize(&mut self, relative_tol: f64) -> Result<(), NotPositiveDefinite> {
        let n = self.dim();
        for i in 0..n {
            let fi = self.first[i];
            for j in fi..=i {
                let fj = self.first[j];
                let start = fi.max(fj);
                let mut s = self.rows[i][j - fi];
                for k in start..j {
                    s -= self.rows[i][k - fi] * self.rows[j][k - fj];
                }
                if j < i {
                    let djj = self.rows[j][j - fj];
                    self.rows[i][j - fi] = s / djj;
                } else {
                    let orig = self.rows[i][i - fi];
                    if !(s > relative_tol * orig.abs()) || !s.is_finite() {
                        return Err(NotPositiveDefinite { row: i, pivot: s });
                    }
                    self.rows[i][i - fi] = libm::sqrt(s);
                }
            }
        }
        Ok(())
    }

    /// Solves `L Lᵀ x = b` after [`Skyline::factorize`].
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut y = b.to_vec();
        for i in 0..n {
            let fi = self.first[i];
            let row = &self.rows[i];
            let mut s = y[i];
            for k in fi..i {
                s -= row[k - fi] * y[k];
            }
            y[i] = s / row[i - fi];
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            let row = &self.rows[i];
            y[i] /= row[i - fi];
            let xi = y[i];
            for k in fi..i {
                y[k] -= row[k - fi] * xi;
            }
        }
        y
    }
}
