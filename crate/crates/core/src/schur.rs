//! Pressure Schur complement `S = B A⁻¹ Bᵀ` in structured form.
//!
//! With free-slip walls `S_N = I - 1 1ᵀ` is the orthogonal projector off the
//! normalized constant. Tangential Dirichlet data perturbs `A` on `r` wall
//! nodes, and Woodbury turns that into a rank-`r` correction:
//!
//! ```text
//! S_D  = S_N - Wᵀ K1⁻¹ W      K1 = h²/2 I + U A_N⁻¹ Uᵀ
//! S_D⁺ = S_N + Wᵀ K2⁻¹ W      K2 = K1 - W Wᵀ = h²/2 I + U (CᵀC)⁺ Uᵀ
//! ```
//!
//! where `W = U B⁺ = U A_N⁻¹ Bᵀ` (r x n²). When every velocity node is
//! perturbed the inverse collapses to `S_N + (2/h²) (B Bᵀ)⁺`.
//!
//! The structured builders only use sparse solves with `A_N`. Dense
//! oracles live alongside for cross-checking and are capped in size.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, StokesError};
use crate::grid::StaggeredGrid;
use crate::linalg::{
    check_dense_cap, pseudoinverse, remove_mean, symmetric_eigenvalues, BandCholesky, Cutoff, DenseCholesky,
    LinearOperator,
};
use crate::operators::OperatorSet;

/// The unit-norm constant pressure `h (1, ..., 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PressureConstant {
    values: Vec<f64>,
}

impl PressureConstant {
    pub fn new(grid: &StaggeredGrid) -> Self {
        Self {
            values: vec![grid.h(); grid.dim_p()],
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `I - 1 1ᵀ` as a dense matrix.
    pub fn projector_dense(&self) -> DMatrix<f64> {
        let one = DVector::from_column_slice(&self.values);
        DMatrix::identity(one.len(), one.len()) - &one * one.transpose()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SchurKind {
    Neumann,
    Dirichlet,
    DirichletInverse,
    LimitingInverse,
}

/// Pseudoinverse of the pressure Neumann Laplacian `B Bᵀ = I ⊗ DDᵀ + DDᵀ ⊗ I`,
/// applied separably through the eigenbasis of the 1D matrix `DDᵀ`.
#[derive(Debug, Clone)]
pub struct PressureLaplacianPinv {
    n: usize,
    /// Column `k` is the k-th eigenvector of `DDᵀ`, ascending eigenvalue.
    basis: DMatrix<f64>,
    eigenvalues: Vec<f64>,
}

impl PressureLaplacianPinv {
    pub fn new(grid: &StaggeredGrid) -> Result<Self> {
        let n = grid.n();
        let d = crate::operators::derivative_1d(n)?.to_dense();
        let ddt = &d * d.transpose();
        let eig = ddt.symmetric_eigen();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let mut basis = DMatrix::zeros(n, n);
        for (k, &src) in order.iter().enumerate() {
            basis.set_column(k, &eig.eigenvectors.column(src));
        }
        // the 1D kernel is exactly the constant
        basis.set_column(0, &DVector::from_element(n, 1.0 / (n as f64).sqrt()));
        let mut eigenvalues: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
        eigenvalues[0] = 0.0;
        Ok(Self {
            n,
            basis,
            eigenvalues,
        })
    }

    pub fn dim(&self) -> usize {
        self.n * self.n
    }

    pub fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        let n = self.n;
        // row iy, column ix
        let xm = DMatrix::from_row_slice(n, n, x);
        let mut coeffs = self.basis.transpose() * xm * &self.basis;
        for iy in 0..n {
            for ix in 0..n {
                let lam = self.eigenvalues[iy] + self.eigenvalues[ix];
                coeffs[(iy, ix)] = if iy == 0 && ix == 0 {
                    0.0
                } else {
                    coeffs[(iy, ix)] / lam
                };
            }
        }
        let ym = &self.basis * coeffs * self.basis.transpose();
        for iy in 0..n {
            for ix in 0..n {
                y[iy * n + ix] = ym[(iy, ix)];
            }
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let dim = self.dim();
        let mut out = DMatrix::zeros(dim, dim);
        let mut e = vec![0.0; dim];
        let mut col = vec![0.0; dim];
        for j in 0..dim {
            e[j] = 1.0;
            self.apply_into(&e, &mut col);
            out.set_column(j, &DVector::from_column_slice(&col));
            e[j] = 0.0;
        }
        out
    }
}

#[derive(Debug, Clone)]
struct Kernel {
    matrix: DMatrix<f64>,
    factor: DenseCholesky,
}

impl Kernel {
    fn new(matrix: DMatrix<f64>, label: &str) -> Result<Self> {
        let factor =
            DenseCholesky::new(&matrix).map_err(|e| StokesError::Structural(format!("{label}: {e}")))?;
        Ok(Self { matrix, factor })
    }
}

/// Low-rank pieces shared by the Dirichlet forms.
#[derive(Debug, Clone)]
pub struct LowRankFactors {
    /// `W = U B⁺`, r x n².
    pub factor: DMatrix<f64>,
    pub k1: DMatrix<f64>,
    pub k2: DMatrix<f64>,
}

impl LowRankFactors {
    /// Computes `W`, `K1` and `K2` from `r` sparse solves with `A_N`.
    pub fn build(ops: &OperatorSet) -> Result<Self> {
        let r = ops.rank();
        if r == 0 {
            return Err(StokesError::ShapeMismatch(
                "no perturbed velocity nodes (r = 0)".into(),
            ));
        }
        let grid = &ops.grid;
        let nodes = &ops.perturbation.nodes;
        let chol = BandCholesky::new(&ops.laplacian_neumann)?;
        let dim = grid.dim_velocity();
        let mut factor = DMatrix::zeros(r, grid.dim_p());
        let mut u_an_ut = DMatrix::zeros(r, r);
        let mut x = vec![0.0; dim];
        for (i, &node) in nodes.iter().enumerate() {
            x.fill(0.0);
            x[node] = 1.0;
            chol.solve_in_place(&mut x);
            let bx = ops.divergence.mul_vec(&x);
            factor.set_row(i, &DVector::from_vec(bx).transpose());
            for (j, &other) in nodes.iter().enumerate() {
                u_an_ut[(i, j)] = x[other];
            }
        }
        // symmetric in exact arithmetic
        let u_an_ut = (&u_an_ut + u_an_ut.transpose()) * 0.5;
        let half_h2 = 0.5 * grid.h() * grid.h();
        let k1 = DMatrix::identity(r, r) * half_h2 + u_an_ut;
        let wwt = &factor * factor.transpose();
        let k2 = &k1 - (&wwt + wwt.transpose()) * 0.5;
        Ok(Self { factor, k1, k2 })
    }
}

/// A structured Schur complement (or pseudoinverse) ready to apply.
#[derive(Debug, Clone)]
pub struct SchurRep {
    kind: SchurKind,
    n: usize,
    base: PressureConstant,
    factor: Option<DMatrix<f64>>,
    kernel: Option<Kernel>,
    pressure_laplacian_pinv: Option<PressureLaplacianPinv>,
}

impl SchurRep {
    pub fn kind(&self) -> SchurKind {
        self.kind
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn base(&self) -> &PressureConstant {
        &self.base
    }

    /// `W = U B⁺` for the Dirichlet forms.
    pub fn factor(&self) -> Option<&DMatrix<f64>> {
        self.factor.as_ref()
    }

    /// `K1` or `K2`.
    pub fn kernel(&self) -> Option<&DMatrix<f64>> {
        self.kernel.as_ref().map(|k| &k.matrix)
    }

    pub fn pressure_laplacian_pinv(&self) -> Option<&PressureLaplacianPinv> {
        self.pressure_laplacian_pinv.as_ref()
    }

    /// Rank of the correction (0 for the plain projector).
    pub fn correction_rank(&self) -> usize {
        self.factor.as_ref().map_or(0, |w| w.nrows())
    }

    fn sign(&self) -> f64 {
        match self.kind {
            SchurKind::Dirichlet => -1.0,
            _ => 1.0,
        }
    }

    /// Dense materialization.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut out = self.base.projector_dense();
        if let (Some(w), Some(k)) = (&self.factor, &self.kernel) {
            let kw = k.factor.solve(w);
            out += (w.transpose() * kw) * self.sign();
        }
        if let Some(l) = &self.pressure_laplacian_pinv {
            let h = 1.0 / self.n as f64;
            out += l.to_dense() * (2.0 / (h * h));
        }
        out
    }
}

impl LinearOperator for SchurRep {
    fn dim(&self) -> usize {
        self.base.values.len()
    }

    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.dim(), "schur apply: input length");
        y.copy_from_slice(x);
        remove_mean(y);
        if let (Some(w), Some(k)) = (&self.factor, &self.kernel) {
            let wx = w * DVector::from_column_slice(x);
            let kwx = k.factor.solve_vec(wx.as_slice());
            let corr = w.tr_mul(&DVector::from_vec(kwx));
            let s = self.sign();
            y.iter_mut().zip(corr.iter()).for_each(|(yi, ci)| *yi += s * ci);
        }
        if let Some(l) = &self.pressure_laplacian_pinv {
            let h = 1.0 / self.n as f64;
            let mut lx = vec![0.0; x.len()];
            l.apply_into(x, &mut lx);
            let s = 2.0 / (h * h);
            y.iter_mut().zip(&lx).for_each(|(yi, li)| *yi += s * li);
        }
    }
}

/// `S_N = I - 1 1ᵀ`.
pub fn build_schur_neumann(grid: &StaggeredGrid) -> SchurRep {
    SchurRep {
        kind: SchurKind::Neumann,
        n: grid.n(),
        base: PressureConstant::new(grid),
        factor: None,
        kernel: None,
        pressure_laplacian_pinv: None,
    }
}

/// `S_D = S_N - Wᵀ K1⁻¹ W` for the operators' perturbation.
pub fn build_schur_dirichlet(ops: &OperatorSet) -> Result<SchurRep> {
    let parts = LowRankFactors::build(ops)?;
    Ok(SchurRep {
        kind: SchurKind::Dirichlet,
        n: ops.grid.n(),
        base: PressureConstant::new(&ops.grid),
        factor: Some(parts.factor),
        kernel: Some(Kernel::new(parts.k1, "K1")?),
        pressure_laplacian_pinv: None,
    })
}

/// `S_D⁺ = S_N + Wᵀ K2⁻¹ W`.
pub fn build_schur_dirichlet_inverse(ops: &OperatorSet) -> Result<SchurRep> {
    let parts = LowRankFactors::build(ops)?;
    Ok(SchurRep {
        kind: SchurKind::DirichletInverse,
        n: ops.grid.n(),
        base: PressureConstant::new(&ops.grid),
        factor: Some(parts.factor),
        kernel: Some(Kernel::new(parts.k2, "K2")?),
        pressure_laplacian_pinv: None,
    })
}

/// `S_N + (2/h²) (B Bᵀ)⁺`. Exact only when every velocity node is
/// perturbed; otherwise an error.
pub fn build_limiting_inverse(ops: &OperatorSet) -> Result<SchurRep> {
    if !ops.perturbation.is_full_rank() {
        return Err(StokesError::ModeMismatch(format!(
            "limiting form needs every velocity node perturbed, got r = {} of {}",
            ops.rank(),
            ops.grid.dim_velocity()
        )));
    }
    limiting_formula(&ops.grid)
}

/// The limiting-case formula on any grid, without the full-rank check.
/// Useful as an approximate inverse for boundary-perturbed problems.
pub fn limiting_formula(grid: &StaggeredGrid) -> Result<SchurRep> {
    Ok(SchurRep {
        kind: SchurKind::LimitingInverse,
        n: grid.n(),
        base: PressureConstant::new(grid),
        factor: None,
        kernel: None,
        pressure_laplacian_pinv: Some(PressureLaplacianPinv::new(grid)?),
    })
}

/// Dense `B A⁻¹ Bᵀ` via Cholesky of `A`.
pub fn schur_dense_oracle(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !a.is_square() || a.ncols() != b.ncols() {
        return Err(StokesError::ShapeMismatch(format!(
            "A {:?} with B {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let chol = DenseCholesky::new(a)?;
    let x = chol.solve(&b.transpose());
    Ok(b * x)
}

/// Number of eigenvalues with `|λ - 1| > tol`.
pub fn count_nonunit_eigenvalues(s: &DMatrix<f64>, tol: f64) -> usize {
    symmetric_eigenvalues(s)
        .into_iter()
        .filter(|l| (l - 1.0).abs() > tol)
        .count()
}

/// Orthogonal projectors onto `Ker B` and `Ker C` built from pseudoinverses.
#[derive(Debug, Clone)]
pub struct HelmholtzProjectors {
    pub onto_divergence_free: DMatrix<f64>,
    pub onto_curl_free: DMatrix<f64>,
}

impl HelmholtzProjectors {
    pub fn new(ops: &OperatorSet) -> Result<Self> {
        check_dense_cap(ops.grid.n())?;
        let b = ops.divergence.to_dense();
        let c = ops.curl.to_dense();
        let dim = b.ncols();
        let id = DMatrix::<f64>::identity(dim, dim);
        let b_pinv = pseudoinverse(&b, Cutoff::Auto)?;
        let c_pinv = pseudoinverse(&c, Cutoff::Auto)?;
        Ok(Self {
            onto_divergence_free: &id - b_pinv * b,
            onto_curl_free: &id - c_pinv * c,
        })
    }

    pub fn split(&self, w: &[f64]) -> HelmholtzSplit {
        let w = DVector::from_column_slice(w);
        HelmholtzSplit {
            divergence_free: (&self.onto_divergence_free * &w).as_slice().to_vec(),
            curl_free: (&self.onto_curl_free * &w).as_slice().to_vec(),
        }
    }
}

/// `w = divergence_free + curl_free`, with the parts in `Ker B` and `Ker C`.
#[derive(Debug, Clone, PartialEq)]
pub struct HelmholtzSplit {
    pub divergence_free: Vec<f64>,
    pub curl_free: Vec<f64>,
}

/// Splits a velocity field along `Ker B ⊕ Ker C`.
pub fn helmholtz_split(ops: &OperatorSet, w: &[f64]) -> Result<HelmholtzSplit> {
    if w.len() != ops.grid.dim_velocity() {
        return Err(StokesError::ShapeMismatch(format!(
            "velocity of length {} for dimension {}",
            w.len(),
            ops.grid.dim_velocity()
        )));
    }
    Ok(HelmholtzProjectors::new(ops)?.split(w))
}

/// Frobenius distance between `A_N⁻¹` and `(BᵀB)⁺ + (CᵀC)⁺`.
pub fn laplacian_inverse_split_check(ops: &OperatorSet) -> Result<f64> {
    check_dense_cap(ops.grid.n())?;
    let a = ops.laplacian_neumann.to_dense();
    let dim = a.nrows();
    let a_inv = DenseCholesky::new(&a)?.solve(&DMatrix::identity(dim, dim));
    let b = ops.divergence.to_dense();
    let c = ops.curl.to_dense();
    let btb = pseudoinverse(&(b.transpose() * &b), Cutoff::Auto)?;
    let ctc = pseudoinverse(&(c.transpose() * &c), Cutoff::Auto)?;
    Ok((a_inv - btb - ctc).norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::PerturbationMode;
    use proptest::prelude::*;

    fn ops(n: usize, mode: PerturbationMode) -> OperatorSet {
        OperatorSet::assemble(&StaggeredGrid::new(n).unwrap(), mode).unwrap()
    }

    fn dense_sd(ops: &OperatorSet) -> DMatrix<f64> {
        schur_dense_oracle(&ops.laplacian_dirichlet.to_dense(), &ops.divergence.to_dense()).unwrap()
    }

    fn constant(n: usize) -> Vec<f64> {
        vec![1.0 / n as f64; n * n]
    }

    fn norm(v: &[f64]) -> f64 {
        v.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    #[test]
    fn pressure_constant_has_unit_norm() {
        for n in [2, 3, 8, 17] {
            let c = PressureConstant::new(&StaggeredGrid::new(n).unwrap());
            assert!((c.norm() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn dense_oracle_identity_gives_gram() {
        let b = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 0.0, -1.0, 0.5, 3.0]);
        let s = schur_dense_oracle(&DMatrix::identity(3, 3), &b).unwrap();
        assert!((s - &b * b.transpose()).norm() < 1e-14);
        assert!(schur_dense_oracle(&DMatrix::zeros(3, 3), &b).is_err());
        assert!(schur_dense_oracle(&DMatrix::identity(2, 2), &b).is_err());
    }

    #[test]
    fn neumann_oracle_is_projector() {
        let o = ops(4, PerturbationMode::Boundary);
        let s = schur_dense_oracle(&o.laplacian_neumann.to_dense(), &o.divergence.to_dense()).unwrap();
        let sn = build_schur_neumann(&o.grid).to_dense();
        assert!((&s - &sn).norm() < 1e-8);
        assert!((&s - s.transpose()).norm() < 1e-10);
    }

    #[test]
    fn neumann_rep_behaviour() {
        let g = StaggeredGrid::new(5).unwrap();
        let sn = build_schur_neumann(&g);
        assert!(norm(&sn.apply(&constant(5))) < 1e-14);
        let mut x: Vec<f64> = (0..25).map(|i| (i as f64).sin()).collect();
        remove_mean(&mut x);
        let y = sn.apply(&x);
        assert!(x.iter().zip(&y).all(|(a, b)| (a - b).abs() < 1e-12));
        let d = sn.to_dense();
        assert!((&d * &d - &d).norm() < 1e-10);
        assert_eq!(d, d.transpose());
        assert_eq!(count_nonunit_eigenvalues(&d, 1e-8), 1);
    }

    #[test]
    fn dirichlet_structured_matches_dense() {
        for (n, mode) in [
            (2, PerturbationMode::Boundary),
            (4, PerturbationMode::Boundary),
            (3, PerturbationMode::Full),
        ] {
            let o = ops(n, mode);
            let rep = build_schur_dirichlet(&o).unwrap();
            let err = (rep.to_dense() - dense_sd(&o)).norm();
            assert!(err < 1e-8, "n={n} {mode:?} err={err}");
            assert!(norm(&rep.apply(&constant(n))) < 1e-10);
        }
    }

    #[test]
    fn kernels_are_spd_and_ordered() {
        let o = ops(4, PerturbationMode::Boundary);
        let parts = LowRankFactors::build(&o).unwrap();
        assert_eq!(parts.factor.shape(), (12, 16));
        let e1 = symmetric_eigenvalues(&parts.k1);
        let e2 = symmetric_eigenvalues(&parts.k2);
        assert!(e1[0] > 0.0 && e2[0] > 0.0);
        let diff = symmetric_eigenvalues(&(&parts.k1 - &parts.k2));
        assert!(diff[0] > -1e-12);
    }

    #[test]
    fn kernel_k2_matches_pseudoinverse_definition() {
        let o = ops(3, PerturbationMode::Boundary);
        let parts = LowRankFactors::build(&o).unwrap();
        let c = o.curl.to_dense();
        let u = o.extraction().to_dense();
        let ctc = pseudoinverse(&(c.transpose() * &c), Cutoff::Auto).unwrap();
        let h = o.grid.h();
        let r = o.rank();
        let k2 = DMatrix::identity(r, r) * (0.5 * h * h) + &u * ctc * u.transpose();
        assert!((k2 - &parts.k2).norm() < 1e-12);
    }

    #[test]
    fn dirichlet_inverse_composes_to_projector() {
        for n in [2, 4] {
            let o = ops(n, PerturbationMode::Boundary);
            let sd = build_schur_dirichlet(&o).unwrap().to_dense();
            let sdi = build_schur_dirichlet_inverse(&o).unwrap();
            let p = PressureConstant::new(&o.grid).projector_dense();
            let err = (sdi.to_dense() * &sd - &p).norm();
            assert!(err < 1e-8, "n={n} err={err}");
            assert!(norm(&sdi.apply(&constant(n))) < 1e-10);
        }
    }

    #[test]
    fn dirichlet_inverse_matches_svd_pseudoinverse() {
        let o = ops(4, PerturbationMode::Boundary);
        let pinv = pseudoinverse(&dense_sd(&o), Cutoff::Auto).unwrap();
        let err = (build_schur_dirichlet_inverse(&o).unwrap().to_dense() - pinv).norm();
        assert!(err < 1e-7, "err={err}");
    }

    #[test]
    fn limiting_inverse_requires_full_rank() {
        let o = ops(4, PerturbationMode::Boundary);
        assert!(matches!(
            build_limiting_inverse(&o),
            Err(StokesError::ModeMismatch(_))
        ));
        let o2 = ops(2, PerturbationMode::Boundary);
        build_limiting_inverse(&o2).unwrap();
    }

    #[test]
    fn limiting_inverse_matches_rank_r_form() {
        for n in [2, 4] {
            let o = ops(n, PerturbationMode::Full);
            let lim = build_limiting_inverse(&o).unwrap().to_dense();
            let lr = build_schur_dirichlet_inverse(&o).unwrap().to_dense();
            assert!((&lim - &lr).norm() < 1e-7, "n={n}");
        }
        let o = ops(2, PerturbationMode::Boundary);
        let pinv = pseudoinverse(&dense_sd(&o), Cutoff::Auto).unwrap();
        assert!((build_limiting_inverse(&o).unwrap().to_dense() - pinv).norm() < 1e-8);
    }

    #[test]
    fn pressure_laplacian_pinv_matches_svd() {
        for n in [2, 3, 5] {
            let g = StaggeredGrid::new(n).unwrap();
            let l = PressureLaplacianPinv::new(&g).unwrap();
            let b = crate::operators::assemble_divergence(&g).unwrap().to_dense();
            let oracle = pseudoinverse(&(&b * b.transpose()), Cutoff::Auto).unwrap();
            let dense = l.to_dense();
            assert!((&dense - &oracle).norm() < 1e-12, "n={n}");
            assert!((&dense - dense.transpose()).norm() < 1e-13);
            let mut out = vec![0.0; n * n];
            l.apply_into(&constant(n), &mut out);
            assert!(norm(&out) < 1e-13);
            let ev = symmetric_eigenvalues(&dense);
            assert!(ev[0] > -1e-13);
            assert_eq!(ev.iter().filter(|v| v.abs() < 1e-10).count(), 1);
        }
    }

    #[test]
    fn helmholtz_split_cases() {
        let o = ops(4, PerturbationMode::Boundary);
        let proj = HelmholtzProjectors::new(&o).unwrap();
        assert!((proj.onto_divergence_free.trace() - 9.0).abs() < 1e-9);
        assert!((proj.onto_curl_free.trace() - 15.0).abs() < 1e-9);

        let q: Vec<f64> = (0..9).map(|i| (i as f64 * 0.7).cos()).collect();
        let w = o.curl.mul_vec_transposed(&q);
        let s = helmholtz_split(&o, &w).unwrap();
        assert!(norm(&s.curl_free) < 1e-9 * norm(&w));
        assert!(s
            .divergence_free
            .iter()
            .zip(&w)
            .all(|(a, b)| (a - b).abs() < 1e-9 * norm(&w)));

        let p: Vec<f64> = (0..16).map(|i| (i as f64 * 0.3).sin()).collect();
        let w = o.gradient.mul_vec(&p);
        let s = helmholtz_split(&o, &w).unwrap();
        assert!(norm(&s.divergence_free) < 1e-9 * norm(&w));

        assert!(helmholtz_split(&o, &[1.0; 3]).is_err());
    }

    #[test]
    fn laplacian_inverse_split_small() {
        assert!(laplacian_inverse_split_check(&ops(2, PerturbationMode::Boundary)).unwrap() < 1e-8);
        assert!(laplacian_inverse_split_check(&ops(4, PerturbationMode::Boundary)).unwrap() < 1e-8);
    }

    #[test]
    fn nonunit_eigenvalue_counts() {
        assert_eq!(count_nonunit_eigenvalues(&DMatrix::identity(5, 5), 1e-8), 0);
        let o = ops(4, PerturbationMode::Boundary);
        let sd = dense_sd(&o);
        assert!(count_nonunit_eigenvalues(&sd, 1e-8) <= o.rank() + 1);
        let ev = symmetric_eigenvalues(&sd);
        assert!(ev[0] >= -1e-9 && *ev.last().unwrap() <= 1.0 + 1e-9);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn reps_are_linear(
            x in proptest::collection::vec(-1.0f64..1.0, 16),
            y in proptest::collection::vec(-1.0f64..1.0, 16),
            a in -2.0f64..2.0,
            b in -2.0f64..2.0,
        ) {
            let o = ops(4, PerturbationMode::Boundary);
            let reps = [
                build_schur_neumann(&o.grid),
                build_schur_dirichlet(&o).unwrap(),
                build_schur_dirichlet_inverse(&o).unwrap(),
                limiting_formula(&o.grid).unwrap(),
            ];
            let comb: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
            for rep in &reps {
                let lhs = rep.apply(&comb);
                let rx = rep.apply(&x);
                let ry = rep.apply(&y);
                let rhs: Vec<f64> = rx.iter().zip(&ry).map(|(p, q)| a * p + b * q).collect();
                let scale = norm(&rhs).max(norm(&lhs)).max(1e-300);
                let diff: Vec<f64> = lhs.iter().zip(&rhs).map(|(p, q)| p - q).collect();
                prop_assert!(norm(&diff) <= 1e-12 * scale.max(1.0));
            }
        }
    }
}
