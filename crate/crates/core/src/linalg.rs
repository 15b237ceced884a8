//! Desk-scale numerical kernels: SVD pseudoinverse and rank, dense and
//! banded Cholesky solves, and (projected, preconditioned) conjugate gradients.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, StokesError};
use crate::sparse::SparseMat;

pub const DEFAULT_DENSE_CAP: usize = 32;

/// Largest `n` for which dense oracles run. `STOKES_DENSE_CAP` overrides it.
pub fn dense_cap() -> usize {
    std::env::var("STOKES_DENSE_CAP")
        .ok()
        .and_then(|s| s.trim().parse().ok())
        .unwrap_or(DEFAULT_DENSE_CAP)
}

pub fn check_dense_cap(n: usize) -> Result<()> {
    let cap = dense_cap();
    if n > cap {
        Err(StokesError::DenseCapExceeded { n, cap })
    } else {
        Ok(())
    }
}

/// Singular-value cutoff for rank decisions.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Cutoff {
    /// `max(rows, cols) * eps * σ_max`.
    #[default]
    Auto,
    Absolute(f64),
}

impl Cutoff {
    fn resolve(self, rows: usize, cols: usize, sigma_max: f64) -> Result<f64> {
        match self {
            Cutoff::Auto => Ok(rows.max(cols) as f64 * f64::EPSILON * sigma_max),
            Cutoff::Absolute(c) if c > 0.0 && c.is_finite() => Ok(c),
            Cutoff::Absolute(c) => Err(StokesError::InvalidTolerance(c)),
        }
    }
}

fn check_finite(m: &DMatrix<f64>) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(StokesError::Factorization("matrix has non-finite entries".into()))
    }
}

/// Thin singular value decomposition `M = U diag(σ) Vᵀ`.
#[derive(Debug, Clone)]
pub struct Svd {
    /// rows x k, orthonormal columns.
    pub u: DMatrix<f64>,
    /// Unsorted, non-negative, length k = min(rows, cols).
    pub singular_values: Vec<f64>,
    /// cols x k, orthonormal columns.
    pub v: DMatrix<f64>,
}

/// One-sided (Hestenes) Jacobi SVD. Slow for large matrices but accurate
/// to working precision even with heavily clustered singular values.
pub fn jacobi_svd(m: &DMatrix<f64>) -> Result<Svd> {
    check_finite(m)?;
    let transposed = m.nrows() < m.ncols();
    let mut a = if transposed { m.transpose() } else { m.clone() };
    let (rows, k) = a.shape();
    let mut v = DMatrix::<f64>::identity(k, k);
    const MAX_SWEEPS: usize = 80;
    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for i in 0..k {
            for j in i + 1..k {
                let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                for r in 0..rows {
                    let (x, y) = (a[(r, i)], a[(r, j)]);
                    alpha += x * x;
                    beta += y * y;
                    gamma += x * y;
                }
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for r in 0..rows {
                    let (x, y) = (a[(r, i)], a[(r, j)]);
                    a[(r, i)] = c * x - s * y;
                    a[(r, j)] = s * x + c * y;
                }
                for r in 0..k {
                    let (x, y) = (v[(r, i)], v[(r, j)]);
                    v[(r, i)] = c * x - s * y;
                    v[(r, j)] = s * x + c * y;
                }
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(StokesError::Factorization("Jacobi SVD did not converge".into()));
    }
    let singular_values: Vec<f64> = (0..k).map(|j| a.column(j).norm()).collect();
    let mut u = a;
    for (j, &s) in singular_values.iter().enumerate() {
        if s > 0.0 {
            u.column_mut(j).unscale_mut(s);
        }
    }
    Ok(if transposed {
        Svd {
            u: v,
            singular_values,
            v: u,
        }
    } else {
        Svd {
            u,
            singular_values,
            v,
        }
    })
}

fn is_exactly_symmetric(m: &DMatrix<f64>) -> bool {
    m.is_square() && (0..m.nrows()).all(|i| (0..i).all(|j| m[(i, j)] == m[(j, i)]))
}

/// Moore–Penrose pseudoinverse. Exactly symmetric input goes through a
/// symmetric eigendecomposition, anything else through [`jacobi_svd`].
pub fn pseudoinverse(m: &DMatrix<f64>, cutoff: Cutoff) -> Result<DMatrix<f64>> {
    check_finite(m)?;
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return Ok(DMatrix::zeros(cols, rows));
    }
    if is_exactly_symmetric(m) {
        let eig = m.clone().symmetric_eigen();
        let sigma_max = eig.eigenvalues.amax();
        let tol = cutoff.resolve(rows, cols, sigma_max)?;
        let mut out = DMatrix::zeros(rows, rows);
        for (k, &l) in eig.eigenvalues.iter().enumerate() {
            if l.abs() > tol {
                let q = eig.eigenvectors.column(k);
                out += (q / l) * q.transpose();
            }
        }
        return Ok(out);
    }
    let svd = jacobi_svd(m)?;
    let sigma_max = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let tol = cutoff.resolve(rows, cols, sigma_max)?;
    let mut out = DMatrix::zeros(cols, rows);
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > tol {
            out += (svd.v.column(k) / s) * svd.u.column(k).transpose();
        }
    }
    Ok(out)
}

/// Number of singular values above the cutoff.
pub fn rank_of(m: &DMatrix<f64>, cutoff: Cutoff) -> Result<usize> {
    check_finite(m)?;
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return Ok(0);
    }
    let sv: Vec<f64> = if is_exactly_symmetric(m) {
        m.clone()
            .symmetric_eigenvalues()
            .iter()
            .map(|l| l.abs())
            .collect()
    } else {
        jacobi_svd(m)?.singular_values
    };
    let sigma_max = sv.iter().copied().fold(0.0, f64::max);
    if sigma_max == 0.0 {
        // the cutoff must still be validated
        cutoff.resolve(rows, cols, 1.0)?;
        return Ok(0);
    }
    let tol = cutoff.resolve(rows, cols, sigma_max)?;
    Ok(sv.iter().filter(|&&s| s > tol).count())
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn symmetric_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Dense Cholesky factor of an SPD matrix.
#[derive(Debug, Clone)]
pub struct DenseCholesky {
    inner: nalgebra::Cholesky<f64, nalgebra::Dyn>,
}

impl DenseCholesky {
    pub fn new(k: &DMatrix<f64>) -> Result<Self> {
        if !k.is_square() {
            return Err(StokesError::ShapeMismatch(format!(
                "cholesky of non-square {:?}",
                k.shape()
            )));
        }
        check_finite(k)?;
        if k.diagonal().iter().any(|&d| d <= 0.0) {
            return Err(StokesError::Factorization("non-positive diagonal entry".into()));
        }
        nalgebra::Cholesky::new(k.clone())
            .map(|inner| Self { inner })
            .ok_or_else(|| StokesError::Factorization("matrix is not positive definite".into()))
    }

    pub fn solve(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        self.inner.solve(rhs)
    }

    pub fn solve_vec(&self, rhs: &[f64]) -> Vec<f64> {
        let b = DVector::from_column_slice(rhs);
        self.inner.solve(&b).as_slice().to_vec()
    }

    pub fn dim(&self) -> usize {
        self.inner.l_dirty().nrows()
    }
}

/// Solves `K X = rhs` for symmetric positive definite `K`.
pub fn sym_solve(k: &DMatrix<f64>, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if k.nrows() != rhs.nrows() {
        return Err(StokesError::ShapeMismatch(format!(
            "system {:?} with right-hand side {:?}",
            k.shape(),
            rhs.shape()
        )));
    }
    Ok(DenseCholesky::new(k)?.solve(rhs))
}

/// Cholesky factorization `A = L Lᵀ` of a sparse SPD matrix stored as a
/// band. The staggered Laplacians have bandwidth `n`, so factoring costs
/// `O(N n²)` and each solve `O(N n)`.
#[derive(Debug, Clone)]
pub struct BandCholesky {
    dim: usize,
    bw: usize,
    /// Row `i` holds `L[i, i-bw..=i]`, left-padded with zeros.
    lower: Vec<f64>,
}

impl BandCholesky {
    pub fn new(a: &SparseMat) -> Result<Self> {
        let (rows, cols) = a.shape();
        if rows != cols {
            return Err(StokesError::ShapeMismatch(format!(
                "band cholesky of non-square {rows}x{cols}"
            )));
        }
        let dim = rows;
        let bw = a.bandwidth();
        let w = bw + 1;
        let mut lower = vec![0.0; dim * w];
        for (i, j, v) in a.triplets() {
            if j <= i {
                lower[i * w + (bw - (i - j))] = v;
            }
        }
        for i in 0..dim {
            let j0 = i.saturating_sub(bw);
            for j in j0..=i {
                // L[i,j] = (A[i,j] - Σ_k L[i,k] L[j,k]) / L[j,j]
                let k0 = j0.max(j.saturating_sub(bw));
                let mut s = lower[i * w + (bw - (i - j))];
                for k in k0..j {
                    s -= lower[i * w + (bw - (i - k))] * lower[j * w + (bw - (j - k))];
                }
                if j == i {
                    if !s.is_finite() || s <= 0.0 {
                        return Err(StokesError::Factorization(format!(
                            "non-positive pivot {s:e} at row {i}"
                        )));
                    }
                    lower[i * w + bw] = s.sqrt();
                } else {
                    lower[i * w + (bw - (i - j))] = s / lower[j * w + bw];
                }
            }
        }
        Ok(Self { dim, bw, lower })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[allow(clippy::needless_range_loop)]
    pub fn solve_in_place(&self, x: &mut [f64]) {
        assert_eq!(x.len(), self.dim, "band solve: rhs length");
        let (bw, w) = (self.bw, self.bw + 1);
        for i in 0..self.dim {
            let mut s = x[i];
            for k in i.saturating_sub(bw)..i {
                s -= self.lower[i * w + (bw - (i - k))] * x[k];
            }
            x[i] = s / self.lower[i * w + bw];
        }
        for i in (0..self.dim).rev() {
            let mut s = x[i];
            for k in i + 1..(i + bw + 1).min(self.dim) {
                s -= self.lower[k * w + (bw - (k - i))] * x[k];
            }
            x[i] = s / self.lower[i * w + bw];
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

/// A square linear map applied to vectors.
pub trait LinearOperator {
    fn dim(&self) -> usize;
    fn apply_into(&self, x: &[f64], y: &mut [f64]);

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim()];
        self.apply_into(x, &mut y);
        y
    }
}

impl LinearOperator for SparseMat {
    fn dim(&self) -> usize {
        self.rows()
    }

    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        self.mul_vec_into(x, y)
    }
}

impl LinearOperator for DMatrix<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        let r = self * DVector::from_column_slice(x);
        y.copy_from_slice(r.as_slice());
    }
}

/// Wraps a closure as a [`LinearOperator`].
pub struct FnOperator<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&[f64], &mut [f64])> FnOperator<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F: Fn(&[f64], &mut [f64])> LinearOperator for FnOperator<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        (self.f)(x, y)
    }
}

/// Identity operator, handy as a no-op preconditioner.
pub struct Identity(pub usize);

impl LinearOperator for Identity {
    fn dim(&self) -> usize {
        self.0
    }

    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        y.copy_from_slice(x)
    }
}

/// Removes the component along the (unit-norm) constant vector: `x -= 1(1·x)`.
pub fn remove_mean(x: &mut [f64]) {
    if x.is_empty() {
        return;
    }
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    x.iter_mut().for_each(|v| *v -= mean);
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgOptions {
    pub rel_tol: f64,
    /// `None` means `10 * len(b)`.
    pub max_iter: Option<usize>,
    pub record_history: bool,
    /// Keep the right-hand side and every iterate mean-free.
    pub project_mean: bool,
}

impl Default for CgOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            max_iter: None,
            record_history: false,
            project_mean: false,
        }
    }
}

impl CgOptions {
    fn validate(&self) -> Result<()> {
        if !self.rel_tol.is_finite() || self.rel_tol <= 0.0 {
            return Err(StokesError::InvalidTolerance(self.rel_tol));
        }
        if self.max_iter == Some(0) {
            return Err(StokesError::InvalidTolerance(0.0));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CgOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// `‖b - A x‖ / ‖b‖` (absolute when `b = 0`).
    pub rel_residual: f64,
    pub converged: bool,
    /// Relative residual after each iteration, starting with the initial one.
    pub history: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Conjugate gradients from a zero initial guess.
pub fn cg_solve(a: &dyn LinearOperator, b: &[f64], opts: &CgOptions) -> Result<CgOutcome> {
    pcg_solve(a, b, None, opts)
}

/// Preconditioned conjugate gradients from a zero initial guess. The
/// preconditioner must be symmetric positive (semi)definite on the working
/// subspace.
pub fn pcg_solve(
    a: &dyn LinearOperator,
    b: &[f64],
    precond: Option<&dyn LinearOperator>,
    opts: &CgOptions,
) -> Result<CgOutcome> {
    opts.validate()?;
    let dim = a.dim();
    if b.len() != dim {
        return Err(StokesError::ShapeMismatch(format!(
            "operator of dimension {dim} with right-hand side of length {}",
            b.len()
        )));
    }
    let project = |v: &mut [f64]| {
        if opts.project_mean {
            remove_mean(v);
        }
    };
    let max_iter = opts.max_iter.unwrap_or(10 * dim.max(1));

    let mut rhs = b.to_vec();
    project(&mut rhs);
    let b_norm = norm(&rhs);
    let scale = if b_norm > 0.0 { b_norm } else { 1.0 };

    let mut x = vec![0.0; dim];
    let mut r = rhs;
    let mut history = Vec::new();
    let mut rel = norm(&r) / scale;
    if opts.record_history {
        history.push(rel);
    }
    if rel <= opts.rel_tol || b_norm == 0.0 {
        return Ok(CgOutcome {
            x,
            iterations: 0,
            rel_residual: rel,
            converged: true,
            history,
        });
    }

    let precondition = |r: &[f64]| -> Vec<f64> {
        let mut z = match precond {
            Some(m) => m.apply(r),
            None => r.to_vec(),
        };
        project(&mut z);
        z
    };

    let mut z = precondition(&r);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; dim];
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        a.apply_into(&p, &mut ap);
        project(&mut ap);
        let pap = dot(&p, &ap);
        let alpha = rz / pap;
        if !alpha.is_finite() {
            return Err(StokesError::Divergence(iterations));
        }
        x.iter_mut().zip(&p).for_each(|(xi, pi)| *xi += alpha * pi);
        r.iter_mut().zip(&ap).for_each(|(ri, api)| *ri -= alpha * api);
        rel = norm(&r) / scale;
        if !rel.is_finite() {
            return Err(StokesError::Divergence(iterations));
        }
        if opts.record_history {
            history.push(rel);
        }
        if rel <= opts.rel_tol {
            break;
        }
        z = precondition(&r);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        if !beta.is_finite() {
            return Err(StokesError::Divergence(iterations));
        }
        rz = rz_new;
        p.iter_mut().zip(&z).for_each(|(pi, zi)| *pi = zi + beta * *pi);
    }
    project(&mut x);

    // report the true residual rather than the recursively updated one
    let mut ax = a.apply(&x);
    let mut rhs = b.to_vec();
    project(&mut rhs);
    project(&mut ax);
    let true_res: Vec<f64> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
    let rel_residual = norm(&true_res) / scale;
    Ok(CgOutcome {
        x,
        iterations,
        rel_residual,
        converged: rel <= opts.rel_tol,
        history,
    })
}
