//! Compressed-row sparse matrices with the handful of operations needed to
//! assemble staggered-grid operators: Kronecker products, block stacking,
//! products and sums. Explicit zeros are never stored.

use nalgebra::DMatrix;

use crate::error::{Result, StokesError};

#[derive(Debug, Clone, PartialEq)]
pub struct SparseMat {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            row_ptr: vec![0; rows + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diagonal(&vec![1.0; n])
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut out = Self::zeros(n, n);
        for (i, &d) in diag.iter().enumerate() {
            if d != 0.0 {
                out.col_idx.push(i);
                out.values.push(d);
            }
            out.row_ptr[i + 1] = out.col_idx.len();
        }
        out
    }

    /// Builds a matrix from `(row, col, value)` triplets. Duplicates are
    /// summed and entries that end up exactly zero are dropped.
    pub fn from_triplets(rows: usize, cols: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        for &(r, c, _) in triplets {
            if r >= rows || c >= cols {
                return Err(StokesError::IndexOutOfBounds {
                    row: r,
                    col: c,
                    rows,
                    cols,
                });
            }
        }
        let mut sorted = triplets.to_vec();
        sorted.sort_by_key(|&(r, c, _)| (r, c));

        let mut out = Self::zeros(rows, cols);
        let mut it = sorted.into_iter().peekable();
        let mut row = 0;
        while let Some((r, c, mut v)) = it.next() {
            while let Some(&(r2, c2, v2)) = it.peek() {
                if (r2, c2) != (r, c) {
                    break;
                }
                v += v2;
                it.next();
            }
            while row < r {
                row += 1;
                out.row_ptr[row] = out.col_idx.len();
            }
            if v != 0.0 {
                out.col_idx.push(c);
                out.values.push(v);
            }
        }
        while row < rows {
            row += 1;
            out.row_ptr[row] = out.col_idx.len();
        }
        Ok(out)
    }

    /// Dense-to-sparse conversion, dropping exact zeros.
    pub fn from_dense(m: &DMatrix<f64>) -> Self {
        let mut out = Self::zeros(m.nrows(), m.ncols());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                let v = m[(i, j)];
                if v != 0.0 {
                    out.col_idx.push(j);
                    out.values.push(v);
                }
            }
            out.row_ptr[i + 1] = out.col_idx.len();
        }
        out
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Stored entries of row `i` as `(col, value)` pairs.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    /// All stored entries in row-major order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.rows).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[range.clone()].binary_search(&j) {
            Ok(k) => self.values[range.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest `|i - j|` over stored entries.
    pub fn bandwidth(&self) -> usize {
        self.triplets().map(|(i, j, _)| i.abs_diff(j)).max().unwrap_or(0)
    }

    pub fn is_symmetric(&self) -> bool {
        self.rows == self.cols && *self == self.transpose()
    }

    pub fn transpose(&self) -> Self {
        let mut counts = vec![0usize; self.cols + 1];
        for &c in &self.col_idx {
            counts[c + 1] += 1;
        }
        for j in 0..self.cols {
            counts[j + 1] += counts[j];
        }
        let row_ptr = counts.clone();
        let mut next = counts;
        let mut col_idx = vec![0; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for i in 0..self.rows {
            for (j, v) in self.row(i) {
                let k = next[j];
                col_idx[k] = i;
                values[k] = v;
                next[j] += 1;
            }
        }
        Self {
            rows: self.cols,
            cols: self.rows,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn scale(&self, alpha: f64) -> Self {
        if alpha == 0.0 {
            return Self::zeros(self.rows, self.cols);
        }
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= alpha);
        out
    }

    /// `alpha * self + beta * other`.
    pub fn linear_combination(&self, alpha: f64, other: &Self, beta: f64) -> Result<Self> {
        if self.shape() != other.shape() {
            return Err(StokesError::ShapeMismatch(format!(
                "cannot add {:?} and {:?}",
                self.shape(),
                other.shape()
            )));
        }
        let triplets: Vec<_> = self
            .triplets()
            .map(|(i, j, v)| (i, j, alpha * v))
            .chain(other.triplets().map(|(i, j, v)| (i, j, beta * v)))
            .collect();
        Self::from_triplets(self.rows, self.cols, &triplets)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.linear_combination(1.0, other, 1.0)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.linear_combination(1.0, other, -1.0)
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(StokesError::ShapeMismatch(format!(
                "cannot multiply {:?} by {:?}",
                self.shape(),
                other.shape()
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        let mut acc = vec![0.0; other.cols];
        let mut touched = vec![false; other.cols];
        let mut pattern = Vec::new();
        for i in 0..self.rows {
            for (k, a) in self.row(i) {
                for (j, b) in other.row(k) {
                    if !touched[j] {
                        touched[j] = true;
                        pattern.push(j);
                    }
                    acc[j] += a * b;
                }
            }
            pattern.sort_unstable();
            for &j in &pattern {
                if acc[j] != 0.0 {
                    out.col_idx.push(j);
                    out.values.push(acc[j]);
                }
                acc[j] = 0.0;
                touched[j] = false;
            }
            pattern.clear();
            out.row_ptr[i + 1] = out.col_idx.len();
        }
        Ok(out)
    }

    /// Kronecker product `self ⊗ other`, assembled by index arithmetic.
    pub fn kron(&self, other: &Self) -> Self {
        let rows = self.rows * other.rows;
        let cols = self.cols * other.cols;
        let mut out = Self::zeros(rows, cols);
        for ia in 0..self.rows {
            for ib in 0..other.rows {
                for (ja, a) in self.row(ia) {
                    for (jb, b) in other.row(ib) {
                        let v = a * b;
                        if v != 0.0 {
                            out.col_idx.push(ja * other.cols + jb);
                            out.values.push(v);
                        }
                    }
                }
                out.row_ptr[ia * other.rows + ib + 1] = out.col_idx.len();
            }
        }
        out
    }

    /// `[self other]`.
    pub fn hstack(&self, other: &Self) -> Result<Self> {
        if self.rows != other.rows {
            return Err(StokesError::ShapeMismatch(format!(
                "hstack of {:?} and {:?}",
                self.shape(),
                other.shape()
            )));
        }
        let mut out = Self::zeros(self.rows, self.cols + other.cols);
        for i in 0..self.rows {
            for (j, v) in self.row(i) {
                out.col_idx.push(j);
                out.values.push(v);
            }
            for (j, v) in other.row(i) {
                out.col_idx.push(self.cols + j);
                out.values.push(v);
            }
            out.row_ptr[i + 1] = out.col_idx.len();
        }
        Ok(out)
    }

    /// `[self; other]`.
    pub fn vstack(&self, other: &Self) -> Result<Self> {
        if self.cols != other.cols {
            return Err(StokesError::ShapeMismatch(format!(
                "vstack of {:?} and {:?}",
                self.shape(),
                other.shape()
            )));
        }
        let offset = self.nnz();
        let mut out = self.clone();
        out.rows += other.rows;
        out.col_idx.extend_from_slice(&other.col_idx);
        out.values.extend_from_slice(&other.values);
        out.row_ptr.extend(other.row_ptr[1..].iter().map(|p| p + offset));
        Ok(out)
    }

    /// `diag(self, other)`.
    pub fn block_diag(&self, other: &Self) -> Self {
        let left = self
            .hstack(&Self::zeros(self.rows, other.cols))
            .expect("row counts agree");
        let right = Self::zeros(other.rows, self.cols)
            .hstack(other)
            .expect("row counts agree");
        left.vstack(&right).expect("column counts agree")
    }

    /// Rows `r0..r1`, columns `c0..c1`.
    pub fn submatrix(&self, r0: usize, r1: usize, c0: usize, c1: usize) -> Self {
        let mut out = Self::zeros(r1 - r0, c1 - c0);
        for i in r0..r1 {
            for (j, v) in self.row(i) {
                if (c0..c1).contains(&j) {
                    out.col_idx.push(j - c0);
                    out.values.push(v);
                }
            }
            out.row_ptr[i - r0 + 1] = out.col_idx.len();
        }
        out
    }

    /// `y = self * x`.
    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.cols, "matvec: input length");
        assert_eq!(y.len(), self.rows, "matvec: output length");
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.row(i).map(|(j, v)| v * x[j]).sum();
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.rows];
        self.mul_vec_into(x, &mut y);
        y
    }

    /// `y = self^T * x` without forming the transpose.
    pub fn mul_vec_transposed(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.rows, "transposed matvec: input length");
        let mut y = vec![0.0; self.cols];
        for (i, &xi) in x.iter().enumerate() {
            for (j, v) in self.row(i) {
                y[j] += v * xi;
            }
        }
        y
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.rows, self.cols);
        for (i, j, v) in self.triplets() {
            m[(i, j)] = v;
        }
        m
    }

    /// Largest entrywise difference; shapes must agree.
    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        Ok(self.sub(other)?.max_abs())
    }
}
