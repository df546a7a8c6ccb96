//! Compressed-row real operators acting on complex state vectors.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hilbert::StateVector;

/// Operators with at least this many rows split `apply` across rayon workers.
const PAR_THRESHOLD: usize = 8192;

#[derive(Debug, Clone, PartialEq)]
pub struct SparseHamiltonian {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    values: Vec<f64>,
    symmetric: bool,
}

impl SparseHamiltonian {
    /// Builds a CSR matrix from `(row, col, value)` triplets.
    ///
    /// Duplicates are summed, exact zeros after summation are dropped and
    /// columns are sorted within each row.
    pub fn from_triplets(dim: usize, mut triplets: Vec<(usize, usize, f64)>) -> Result<Self> {
        if let Some(&(r, c, _)) = triplets.iter().find(|&&(r, c, _)| r >= dim || c >= dim) {
            return Err(Error::DimensionMismatch { expected: dim, got: r.max(c) + 1 });
        }
        triplets.sort_unstable_by_key(|t| (t.0, t.1));
        let mut row_ptr = vec![0usize; dim + 1];
        let mut cols = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        let mut rows = Vec::with_capacity(triplets.len());
        for (r, c, v) in triplets {
            if rows.last() == Some(&r) && cols.last() == Some(&c) {
                *values.last_mut().unwrap() += v;
            } else {
                rows.push(r);
                cols.push(c);
                values.push(v);
            }
        }
        let mut keep_cols = Vec::with_capacity(cols.len());
        let mut keep_vals = Vec::with_capacity(values.len());
        for ((r, c), v) in rows.into_iter().zip(cols).zip(values) {
            if v != 0.0 {
                row_ptr[r + 1] += 1;
                keep_cols.push(c);
                keep_vals.push(v);
            }
        }
        for i in 0..dim {
            row_ptr[i + 1] += row_ptr[i];
        }
        Ok(Self { dim, row_ptr, cols: keep_cols, values: keep_vals, symmetric: false })
    }

    pub fn zeros(dim: usize) -> Self {
        Self { dim, row_ptr: vec![0; dim + 1], cols: Vec::new(), values: Vec::new(), symmetric: true }
    }

    pub fn identity(dim: usize) -> Self {
        Self::diagonal(&vec![1.0; dim])
    }

    pub fn diagonal(values: &[f64]) -> Self {
        let triplets = values.iter().enumerate().map(|(i, &v)| (i, i, v)).collect();
        let mut m = Self::from_triplets(values.len(), triplets).expect("indices in range");
        m.symmetric = true;
        m
    }

    /// Marks the operator as symmetric after checking it.
    pub fn into_symmetric(mut self) -> Result<Self> {
        let defect = self.max_abs_diff(&self.transpose())?;
        if defect > 1e-14 {
            return Err(Error::Input(format!("operator is not symmetric (defect {defect:e})")));
        }
        self.symmetric = true;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.cols[span.clone()].iter().copied().zip(self.values[span].iter().copied())
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.dim).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.cols[span.clone()].binary_search(&c) {
            Ok(k) => self.values[span.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn transpose(&self) -> Self {
        let triplets = self.entries().map(|(r, c, v)| (c, r, v)).collect();
        let mut t = Self::from_triplets(self.dim, triplets).expect("indices in range");
        t.symmetric = self.symmetric;
        t
    }

    pub fn scale(&self, factor: f64) -> Self {
        let mut out = self.clone();
        if factor == 0.0 {
            return Self::zeros(self.dim);
        }
        out.values.iter_mut().for_each(|v| *v *= factor);
        out
    }

    /// `self + factor * other`
    pub fn add_scaled(&self, other: &Self, factor: f64) -> Result<Self> {
        self.check_dim(other.dim)?;
        let triplets = self
            .entries()
            .chain(other.entries().map(|(r, c, v)| (r, c, factor * v)))
            .collect();
        let mut m = Self::from_triplets(self.dim, triplets)?;
        m.symmetric = self.symmetric && other.symmetric;
        Ok(m)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.add_scaled(other, 1.0)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add_scaled(other, -1.0)
    }

    /// Sparse product `self * other`.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        self.check_dim(other.dim)?;
        let mut acc = vec![0.0; self.dim];
        let mut seen = vec![false; self.dim];
        let mut touched = Vec::new();
        let mut triplets = Vec::new();
        for r in 0..self.dim {
            for (k, a) in self.row(r) {
                for (c, b) in other.row(k) {
                    if !seen[c] {
                        seen[c] = true;
                        touched.push(c);
                    }
                    acc[c] += a * b;
                }
            }
            for &c in &touched {
                triplets.push((r, c, acc[c]));
                acc[c] = 0.0;
                seen[c] = false;
            }
            touched.clear();
        }
        Self::from_triplets(self.dim, triplets)
    }

    /// `[self, other] = self·other − other·self`
    pub fn commutator(&self, other: &Self) -> Result<Self> {
        self.matmul(other)?.sub(&other.matmul(self)?)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        Ok(self.sub(other)?.max_abs())
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for (r, c, v) in self.entries() {
            m[(r, c)] = v;
        }
        m
    }

    pub fn matvec(&self, v: &StateVector) -> Result<StateVector> {
        self.check_dim(v.len())?;
        let mut out = StateVector::zeros(self.dim);
        self.apply(v.amplitudes(), out.amplitudes_mut());
        Ok(out)
    }

    /// `y = A x` without dimension checks. Each row is summed in column order.
    pub fn apply(&self, x: &[Complex64], y: &mut [Complex64]) {
        let row = |r: usize| -> Complex64 {
            let mut s = Complex64::new(0.0, 0.0);
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                s += x[self.cols[k]] * self.values[k];
            }
            s
        };
        if self.dim >= PAR_THRESHOLD {
            y.par_iter_mut().enumerate().for_each(|(r, out)| *out = row(r));
        } else {
            y.iter_mut().enumerate().for_each(|(r, out)| *out = row(r));
        }
    }

    /// `⟨v|A|v⟩` for a symmetric real operator.
    pub fn expectation(&self, v: &StateVector) -> Result<f64> {
        let av = self.matvec(v)?;
        Ok(v.dot(&av).re)
    }

    fn check_dim(&self, got: usize) -> Result<()> {
        if got != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got });
        }
        Ok(())
    }
}
