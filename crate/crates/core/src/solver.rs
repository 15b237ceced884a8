//! Saddle-point solves by Schur reduction.
//!
//! The pressure solves `S p = g` with `S = B A⁻¹ Bᵀ` and `g = B A⁻¹ f` by
//! projected CG (mean removed from the right-hand side and every iterate),
//! preconditioned by one of the structured inverses from [`crate::schur`].
//! The velocity is then recovered from `A u = f - Bᵀ p` with a band Cholesky
//! factor of `A`.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Result, StokesError};
use crate::grid::{NodeSet, StaggeredGrid};
use crate::linalg::{pcg_solve, remove_mean, BandCholesky, CgOptions, LinearOperator};
use crate::operators::{OperatorSet, PerturbationMode};
use crate::schur::{build_schur_dirichlet_inverse, build_schur_neumann, limiting_formula, SchurRep};
use crate::sparse::SparseMat;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BvpKind {
    /// Tangential velocity prescribed.
    Dirichlet,
    /// Normal derivative of the tangential velocity prescribed.
    Neumann,
}

impl BvpKind {
    pub fn name(self) -> &'static str {
        match self {
            BvpKind::Dirichlet => "dirichlet",
            BvpKind::Neumann => "neumann",
        }
    }
}

impl std::str::FromStr for BvpKind {
    type Err = StokesError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dirichlet" => Ok(Self::Dirichlet),
            "neumann" => Ok(Self::Neumann),
            other => Err(StokesError::UnknownName(other.to_string())),
        }
    }
}

/// Tangential boundary data along one wall, as a function of the
/// coordinate running along that wall.
#[derive(Clone, Default)]
pub enum WallProfile {
    #[default]
    Zero,
    Constant(f64),
    /// One value per wall-adjacent node (n - 1 of them), in increasing
    /// coordinate order.
    Table(Vec<f64>),
    Function(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for WallProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WallProfile::Zero => write!(f, "Zero"),
            WallProfile::Constant(c) => write!(f, "Constant({c})"),
            WallProfile::Table(t) => f.debug_tuple("Table").field(t).finish(),
            WallProfile::Function(_) => write!(f, "Function(..)"),
        }
    }
}

impl WallProfile {
    fn eval(&self, index: usize, coord: f64) -> Result<f64> {
        match self {
            WallProfile::Zero => Ok(0.0),
            WallProfile::Constant(c) => Ok(*c),
            WallProfile::Table(t) => t.get(index).copied().ok_or_else(|| {
                StokesError::ShapeMismatch(format!("wall table of length {} has no entry {index}", t.len()))
            }),
            WallProfile::Function(f) => Ok(f(coord)),
        }
    }

    fn is_zero(&self) -> bool {
        matches!(self, WallProfile::Zero)
    }
}

/// Tangential data on the four walls. Values are the `x` velocity component
/// on the bottom/top walls and the `y` component on the left/right walls.
#[derive(Debug, Clone, Default)]
pub struct TangentialData {
    pub bottom: WallProfile,
    pub top: WallProfile,
    pub left: WallProfile,
    pub right: WallProfile,
}

impl TangentialData {
    pub fn zero() -> Self {
        Self::default()
    }

    /// Unit tangential velocity along the top wall.
    pub fn lid_driven() -> Self {
        Self {
            top: WallProfile::Constant(1.0),
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct BvpConfig {
    pub kind: BvpKind,
    pub tangential: TangentialData,
    /// Ignored for the Neumann problem.
    pub mode: PerturbationMode,
}

impl BvpConfig {
    pub fn lid_driven_cavity() -> Self {
        Self {
            kind: BvpKind::Dirichlet,
            tangential: TangentialData::lid_driven(),
            mode: PerturbationMode::Boundary,
        }
    }

    pub fn new(kind: BvpKind, tangential: TangentialData) -> Self {
        Self {
            kind,
            tangential,
            mode: PerturbationMode::Boundary,
        }
    }

    pub fn with_mode(mut self, mode: PerturbationMode) -> Self {
        self.mode = mode;
        self
    }
}

/// Discrete boundary term `f_h = (f_u, f_v)`.
///
/// Dirichlet data enters through ghost-node elimination and contributes
/// `(2/h²) f` at each wall-adjacent node, matching the `2/h²` diagonal of
/// `A_D`. Neumann data contributes `(1/h) f` at the same nodes.
pub fn build_rhs(grid: &StaggeredGrid, config: &BvpConfig) -> Result<Vec<f64>> {
    let n = grid.n();
    let inv_h = grid.inv_h();
    let scale = match config.kind {
        BvpKind::Dirichlet => 2.0 * inv_h * inv_h,
        BvpKind::Neumann => inv_h,
    };
    let mut f = vec![0.0; grid.dim_velocity()];
    let t = &config.tangential;
    let du = grid.dim_u();
    for k in 0..n - 1 {
        // u nodes on the first/last shifted row, v nodes on the first/last
        // shifted column; all walls are walked in increasing coordinate
        for (profile, iy) in [(&t.bottom, 0), (&t.top, n - 1)] {
            if profile.is_zero() {
                continue;
            }
            let idx = grid.flat_index(NodeSet::U, k, iy);
            let (x, _) = grid.coordinates(NodeSet::U, idx);
            f[idx] += scale * profile.eval(k, x)?;
        }
        for (profile, ix) in [(&t.left, 0), (&t.right, n - 1)] {
            if profile.is_zero() {
                continue;
            }
            let idx = grid.flat_index(NodeSet::V, ix, k);
            let (_, y) = grid.coordinates(NodeSet::V, idx);
            f[du + idx] += scale * profile.eval(k, y)?;
        }
    }
    Ok(f)
}

/// Preconditioner for the pressure CG.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preconditioner {
    None,
    /// `S_N = I - 1 1ᵀ`.
    NeumannProjector,
    /// Rank-r form of `S_D⁺`.
    DirichletRankR,
    /// `S_N + (2/h²)(B Bᵀ)⁺`.
    LimitingFormula,
}

impl Preconditioner {
    pub const ALL: [Preconditioner; 4] = [
        Preconditioner::None,
        Preconditioner::NeumannProjector,
        Preconditioner::DirichletRankR,
        Preconditioner::LimitingFormula,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preconditioner::None => "none",
            Preconditioner::NeumannProjector => "neumann-projector",
            Preconditioner::DirichletRankR => "dirichlet-rank-r",
            Preconditioner::LimitingFormula => "limiting-formula",
        }
    }

    /// The exact structured inverse for a problem kind.
    pub fn exact_for(kind: BvpKind) -> Self {
        match kind {
            BvpKind::Dirichlet => Preconditioner::DirichletRankR,
            BvpKind::Neumann => Preconditioner::NeumannProjector,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    /// `None` picks the exact structured inverse for the problem kind.
    pub preconditioner: Option<Preconditioner>,
    pub cg: CgOptions,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            preconditioner: None,
            cg: CgOptions {
                rel_tol: 1e-12,
                max_iter: None,
                record_history: false,
                project_mean: true,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SaddleSolution {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    /// Mean-free pressure.
    pub p: Vec<f64>,
    pub schur_iters: usize,
    pub schur_rel_residual: f64,
    pub converged: bool,
    /// Largest block residual of the coupled system relative to `‖f‖`.
    pub coupled_residual: f64,
    /// `‖B (u, v)‖₂`.
    pub divergence_norm: f64,
}

impl SaddleSolution {
    pub fn velocity(&self) -> Vec<f64> {
        self.u.iter().chain(&self.v).copied().collect()
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// `p ↦ B A⁻¹ Bᵀ p` through a band factorization of `A`.
pub struct SchurOperator<'a> {
    divergence: &'a SparseMat,
    factor: &'a BandCholesky,
}

impl LinearOperator for SchurOperator<'_> {
    fn dim(&self) -> usize {
        self.divergence.rows()
    }

    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        let mut t = self.divergence.mul_vec_transposed(x);
        self.factor.solve_in_place(&mut t);
        self.divergence.mul_vec_into(&t, y);
    }
}

/// Factorized operators for one grid and boundary-value problem.
#[derive(Debug, Clone)]
pub struct StokesSolver {
    config: BvpConfig,
    ops: OperatorSet,
    factor: BandCholesky,
}

impl StokesSolver {
    pub fn new(grid: &StaggeredGrid, config: BvpConfig) -> Result<Self> {
        let ops = OperatorSet::assemble(grid, config.mode)?;
        let factor = match config.kind {
            BvpKind::Dirichlet => BandCholesky::new(&ops.laplacian_dirichlet)?,
            BvpKind::Neumann => BandCholesky::new(&ops.laplacian_neumann)?,
        };
        Ok(Self { config, ops, factor })
    }

    pub fn grid(&self) -> &StaggeredGrid {
        &self.ops.grid
    }

    pub fn ops(&self) -> &OperatorSet {
        &self.ops
    }

    pub fn config(&self) -> &BvpConfig {
        &self.config
    }

    /// The velocity Laplacian `A` of this problem.
    pub fn laplacian(&self) -> &SparseMat {
        match self.config.kind {
            BvpKind::Dirichlet => &self.ops.laplacian_dirichlet,
            BvpKind::Neumann => &self.ops.laplacian_neumann,
        }
    }

    pub fn schur_operator(&self) -> SchurOperator<'_> {
        SchurOperator {
            divergence: &self.ops.divergence,
            factor: &self.factor,
        }
    }

    pub fn rhs(&self) -> Result<Vec<f64>> {
        build_rhs(self.grid(), &self.config)
    }

    pub fn preconditioner(&self, kind: Preconditioner) -> Result<Option<SchurRep>> {
        Ok(match kind {
            Preconditioner::None => None,
            Preconditioner::NeumannProjector => Some(build_schur_neumann(self.grid())),
            Preconditioner::DirichletRankR => Some(build_schur_dirichlet_inverse(&self.ops)?),
            Preconditioner::LimitingFormula => Some(limiting_formula(self.grid())?),
        })
    }

    /// `u = A⁻¹ (f - Bᵀ p)`.
    pub fn recover_velocity(&self, f: &[f64], p: &[f64]) -> Vec<f64> {
        let bt_p = self.ops.gradient.mul_vec(p);
        let mut rhs: Vec<f64> = f.iter().zip(&bt_p).map(|(a, b)| a - b).collect();
        self.factor.solve_in_place(&mut rhs);
        rhs
    }

    pub fn solve(&self, f: &[f64], opts: &SolveOptions) -> Result<SaddleSolution> {
        let kind = opts
            .preconditioner
            .unwrap_or_else(|| Preconditioner::exact_for(self.config.kind));
        let precond = self.preconditioner(kind)?;
        self.solve_with(f, precond.as_ref().map(|p| p as &dyn LinearOperator), &opts.cg)
    }

    pub fn solve_with(
        &self,
        f: &[f64],
        precond: Option<&dyn LinearOperator>,
        cg: &CgOptions,
    ) -> Result<SaddleSolution> {
        let grid = self.grid();
        if f.len() != grid.dim_velocity() {
            return Err(StokesError::ShapeMismatch(format!(
                "right-hand side of length {} for velocity dimension {}",
                f.len(),
                grid.dim_velocity()
            )));
        }
        let cg = CgOptions {
            project_mean: true,
            ..*cg
        };
        let mut a_inv_f = f.to_vec();
        self.factor.solve_in_place(&mut a_inv_f);
        let g = self.ops.divergence.mul_vec(&a_inv_f);

        let outcome = pcg_solve(&self.schur_operator(), &g, precond, &cg)?;
        let mut p = outcome.x;
        remove_mean(&mut p);
        let velocity = self.recover_velocity(f, &p);

        let a = self.laplacian();
        let momentum: Vec<f64> = a
            .mul_vec(&velocity)
            .iter()
            .zip(self.ops.gradient.mul_vec(&p))
            .zip(f)
            .map(|((au, btp), fi)| au + btp - fi)
            .collect();
        let div = self.ops.divergence.mul_vec(&velocity);
        let f_norm = norm(f);
        let scale = if f_norm > 0.0 { f_norm } else { 1.0 };
        let divergence_norm = norm(&div);
        let coupled_residual = norm(&momentum).max(divergence_norm) / scale;

        let du = grid.dim_u();
        Ok(SaddleSolution {
            u: velocity[..du].to_vec(),
            v: velocity[du..].to_vec(),
            p,
            schur_iters: outcome.iterations,
            schur_rel_residual: outcome.rel_residual,
            converged: outcome.converged,
            coupled_residual,
            divergence_norm,
        })
    }
}

/// Solves the problem with the exact structured preconditioner.
pub fn solve_stokes(grid: &StaggeredGrid, config: &BvpConfig, f: &[f64]) -> Result<SaddleSolution> {
    StokesSolver::new(grid, config.clone())?.solve(f, &SolveOptions::default())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyRow {
    pub n: usize,
    pub bvp: BvpKind,
    pub mode: PerturbationMode,
    pub preconditioner: Preconditioner,
    pub iterations: usize,
    pub converged: bool,
    pub rel_residual: f64,
}

/// Pressure-CG iteration counts for every preconditioner at each size,
/// using the configuration's own boundary data as right-hand side.
pub fn iteration_study(sizes: &[usize], config: &BvpConfig, cg: &CgOptions) -> Result<Vec<StudyRow>> {
    let mut rows = Vec::with_capacity(sizes.len() * Preconditioner::ALL.len());
    for &n in sizes {
        let grid = StaggeredGrid::new(n)?;
        let solver = StokesSolver::new(&grid, config.clone())?;
        let f = solver.rhs()?;
        for pc in Preconditioner::ALL {
            let opts = SolveOptions {
                preconditioner: Some(pc),
                cg: *cg,
            };
            let sol = solver.solve(&f, &opts)?;
            rows.push(StudyRow {
                n,
                bvp: config.kind,
                mode: config.mode,
                preconditioner: pc,
                iterations: sol.schur_iters,
                converged: sol.converged,
                rel_residual: sol.schur_rel_residual,
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> StaggeredGrid {
        StaggeredGrid::new(n).unwrap()
    }

    #[test]
    fn cavity_rhs_n4() {
        let g = grid(4);
        let f = build_rhs(&g, &BvpConfig::lid_driven_cavity()).unwrap();
        let fu = &f[..g.dim_u()];
        let nz: Vec<_> = fu.iter().enumerate().filter(|(_, v)| **v != 0.0).collect();
        assert_eq!(nz.len(), 3);
        assert!(nz.iter().all(|(_, v)| **v == 32.0));
        // top row of u
        assert!(nz.iter().all(|(i, _)| g.node_index(NodeSet::U, *i).1 == 3));
        assert!(f[g.dim_u()..].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn zero_data_gives_zero_rhs() {
        for kind in [BvpKind::Dirichlet, BvpKind::Neumann] {
            let f = build_rhs(&grid(5), &BvpConfig::new(kind, TangentialData::zero())).unwrap();
            assert!(f.iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn opposite_walls_give_antisymmetric_rhs() {
        let g = grid(4);
        let data = TangentialData {
            top: WallProfile::Constant(1.0),
            bottom: WallProfile::Constant(-1.0),
            ..Default::default()
        };
        let f = build_rhs(&g, &BvpConfig::new(BvpKind::Dirichlet, data)).unwrap();
        let fu = &f[..g.dim_u()];
        assert_eq!(fu.iter().filter(|v| **v != 0.0).count(), 6);
        for k in 0..g.dim_u() {
            let (ix, iy) = g.node_index(NodeSet::U, k);
            let flipped = g.flat_index(NodeSet::U, ix, g.n() - 1 - iy);
            assert_eq!(fu[k], -fu[flipped]);
        }
    }

    #[test]
    fn neumann_rhs_scaling_and_tables() {
        let g = grid(4);
        let data = TangentialData {
            left: WallProfile::Table(vec![1.0, 2.0, 3.0]),
            right: WallProfile::Function(Arc::new(|y| y)),
            ..Default::default()
        };
        let f = build_rhs(&g, &BvpConfig::new(BvpKind::Neumann, data)).unwrap();
        let fv = &f[g.dim_u()..];
        assert_eq!(fv[g.flat_index(NodeSet::V, 0, 1)], 8.0);
        assert_eq!(fv[g.flat_index(NodeSet::V, 3, 2)], 4.0 * 0.75);
        let bad = TangentialData {
            top: WallProfile::Table(vec![1.0]),
            ..Default::default()
        };
        assert!(build_rhs(&g, &BvpConfig::new(BvpKind::Dirichlet, bad)).is_err());
    }

    #[test]
    fn homogeneous_neumann_solution_is_zero() {
        let g = grid(4);
        let cfg = BvpConfig::new(BvpKind::Neumann, TangentialData::zero());
        let f = build_rhs(&g, &cfg).unwrap();
        let sol = solve_stokes(&g, &cfg, &f).unwrap();
        assert!(sol.u.iter().chain(&sol.v).chain(&sol.p).all(|v| *v == 0.0));
        assert_eq!(sol.schur_iters, 0);
    }

    #[test]
    fn cavity_solve_is_accurate_and_fast() {
        for n in [2, 4, 8] {
            let g = grid(n);
            let cfg = BvpConfig::lid_driven_cavity();
            let f = build_rhs(&g, &cfg).unwrap();
            let sol = solve_stokes(&g, &cfg, &f).unwrap();
            assert!(sol.converged);
            assert!(sol.schur_iters <= 3, "n={n} iters={}", sol.schur_iters);
            assert!(sol.coupled_residual <= 1e-8, "n={n} res={}", sol.coupled_residual);
            let vel = sol.velocity();
            assert!(sol.divergence_norm <= 1e-8 * g.inv_h() * norm(&vel));
            let mean = sol.p.iter().sum::<f64>() / sol.p.len() as f64;
            assert!(mean.abs() < 1e-12);
        }
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let g = grid(3);
        let cfg = BvpConfig::lid_driven_cavity();
        assert!(matches!(
            solve_stokes(&g, &cfg, &[1.0; 3]),
            Err(StokesError::ShapeMismatch(_))
        ));
    }

    #[test]
    fn constant_pressure_shift_leaves_velocity_unchanged() {
        let g = grid(4);
        let solver = StokesSolver::new(&g, BvpConfig::lid_driven_cavity()).unwrap();
        let f = solver.rhs().unwrap();
        let sol = solver.solve(&f, &SolveOptions::default()).unwrap();
        let shifted: Vec<f64> = sol.p.iter().map(|p| p + 3.5).collect();
        let a = solver.recover_velocity(&f, &sol.p);
        let b = solver.recover_velocity(&f, &shifted);
        assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() <= 1e-12));
    }

    #[test]
    fn study_has_row_per_preconditioner() {
        let cg = SolveOptions::default().cg;
        let rows = iteration_study(&[4, 8], &BvpConfig::lid_driven_cavity(), &cg).unwrap();
        assert_eq!(rows.len(), 8);
        for r in &rows {
            assert!(r.converged);
            if r.preconditioner == Preconditioner::DirichletRankR {
                assert!(r.iterations <= 3);
            }
        }
        let none: Vec<_> = rows
            .iter()
            .filter(|r| r.preconditioner == Preconditioner::None)
            .map(|r| r.iterations)
            .collect();
        assert!(none[1] > none[0]);
        let neumann = BvpConfig::new(
            BvpKind::Neumann,
            TangentialData {
                top: WallProfile::Constant(1.0),
                ..Default::default()
            },
        );
        for r in iteration_study(&[3, 6], &neumann, &cg).unwrap() {
            if r.preconditioner == Preconditioner::NeumannProjector {
                assert!(r.iterations <= 2);
            }
        }
    }
}
