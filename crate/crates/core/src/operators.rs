//! Staggered-grid operators assembled from one 1D derivative matrix.
//!
//! Every 2D operator is a Kronecker product of the `n x (n-1)` difference
//! matrix `D` (aligned → shifted axis) with an identity, following the
//! x-fastest ordering of [`crate::grid`].

use serde::{Deserialize, Serialize};

use crate::error::{Result, StokesError};
use crate::grid::StaggeredGrid;
use crate::sparse::SparseMat;

/// Where the tangential Dirichlet perturbation acts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PerturbationMode {
    /// Velocity nodes adjacent to a wall carrying tangential data.
    Boundary,
    /// Every velocity node (synthetic limiting case).
    Full,
}

impl PerturbationMode {
    pub const ALL: [PerturbationMode; 2] = [PerturbationMode::Boundary, PerturbationMode::Full];

    pub fn name(self) -> &'static str {
        match self {
            PerturbationMode::Boundary => "boundary",
            PerturbationMode::Full => "full",
        }
    }
}

impl std::str::FromStr for PerturbationMode {
    type Err = StokesError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "boundary" => Ok(Self::Boundary),
            "full" => Ok(Self::Full),
            other => Err(StokesError::UnknownName(other.to_string())),
        }
    }
}

/// The 1D derivative `D`: `n x (n-1)`, `1/h` on the diagonal and `-1/h`
/// on the subdiagonal. Maps aligned-axis values to shifted-axis values.
pub fn derivative_1d(n: usize) -> Result<SparseMat> {
    if n < 2 {
        return Err(StokesError::InvalidSize(n));
    }
    let inv_h = n as f64;
    let mut t = Vec::with_capacity(2 * (n - 1));
    for j in 0..n - 1 {
        t.push((j, j, inv_h));
        t.push((j + 1, j, -inv_h));
    }
    SparseMat::from_triplets(n, n - 1, &t)
}

/// Directional derivatives between staggered node sets.
#[derive(Debug, Clone)]
pub struct VelocityDerivatives {
    /// `∂x` from u-nodes to p-nodes: `I_n ⊗ D`.
    pub dx_u: SparseMat,
    /// `∂y` from v-nodes to p-nodes: `D ⊗ I_n`.
    pub dy_v: SparseMat,
    /// `∂x` from q-nodes to v-nodes: `I_{n-1} ⊗ D`.
    pub dx_q: SparseMat,
    /// `∂y` from q-nodes to u-nodes: `D ⊗ I_{n-1}`.
    pub dy_q: SparseMat,
}

pub fn assemble_velocity_derivatives(grid: &StaggeredGrid) -> Result<VelocityDerivatives> {
    let n = grid.n();
    let d = derivative_1d(n)?;
    let id_shifted = SparseMat::identity(n);
    let id_aligned = SparseMat::identity(n - 1);
    Ok(VelocityDerivatives {
        dx_u: id_shifted.kron(&d),
        dy_v: d.kron(&id_shifted),
        dx_q: id_aligned.kron(&d),
        dy_q: d.kron(&id_aligned),
    })
}

/// Negative divergence `[-∂x_u  -∂y_v]`, `dim_p x (dim_u + dim_v)`.
pub fn assemble_divergence(grid: &StaggeredGrid) -> Result<SparseMat> {
    let d = assemble_velocity_derivatives(grid)?;
    divergence_from(&d)
}

fn divergence_from(d: &VelocityDerivatives) -> Result<SparseMat> {
    d.dx_u.scale(-1.0).hstack(&d.dy_v.scale(-1.0))
}

/// Curl `C`, built as the transpose of `C^T = [-∂y_q; ∂x_q]`.
pub fn assemble_curl(grid: &StaggeredGrid) -> Result<SparseMat> {
    let d = assemble_velocity_derivatives(grid)?;
    curl_from(&d)
}

fn curl_from(d: &VelocityDerivatives) -> Result<SparseMat> {
    Ok(d.dy_q.scale(-1.0).vstack(&d.dx_q)?.transpose())
}

/// Neumann vector Laplacian as the block-diagonal Kronecker sum
/// `diag(I_n ⊗ DᵀD + DDᵀ ⊗ I_{n-1},  I_{n-1} ⊗ DDᵀ + DᵀD ⊗ I_n)`.
///
/// This equals `BᵀB + CᵀC`; the verify suite checks that independently.
pub fn assemble_laplacian_neumann(grid: &StaggeredGrid) -> Result<SparseMat> {
    let n = grid.n();
    let d = derivative_1d(n)?;
    let dt = d.transpose();
    let dtd = dt.matmul(&d)?; // (n-1) x (n-1), Dirichlet-type
    let ddt = d.matmul(&dt)?; // n x n, Neumann-type
    let i_s = SparseMat::identity(n);
    let i_a = SparseMat::identity(n - 1);
    let a_u = i_s.kron(&dtd).add(&ddt.kron(&i_a))?;
    let a_v = i_a.kron(&ddt).add(&dtd.kron(&i_s))?;
    Ok(a_u.block_diag(&a_v))
}

/// Diagonal 0/1 marker of perturbed velocity nodes together with the
/// row-extraction operator `U` (`UᵀU = I_pert`).
#[derive(Debug, Clone)]
pub struct Perturbation {
    pub mode: PerturbationMode,
    pub marker: SparseMat,
    pub extraction: SparseMat,
    /// Flat velocity indices of the perturbed nodes, ascending.
    pub nodes: Vec<usize>,
}

impl Perturbation {
    pub fn rank(&self) -> usize {
        self.nodes.len()
    }

    /// True when every velocity node is perturbed, whatever mode built it.
    pub fn is_full_rank(&self) -> bool {
        self.rank() == self.marker.rows()
    }
}

pub fn assemble_perturbation(grid: &StaggeredGrid, mode: PerturbationMode) -> Result<Perturbation> {
    let n = grid.n();
    let dim = grid.dim_velocity();
    let diag = match mode {
        PerturbationMode::Full => vec![1.0; dim],
        PerturbationMode::Boundary => {
            // first/last slab of the shifted axis: y for u, x for v
            let mut edge = vec![0.0; n];
            edge[0] = 1.0;
            edge[n - 1] = 1.0;
            let edge = SparseMat::from_diagonal(&edge);
            let i_a = SparseMat::identity(n - 1);
            let marker = edge.kron(&i_a).block_diag(&i_a.kron(&edge));
            marker.diagonal()
        }
    };
    let nodes: Vec<usize> = diag
        .iter()
        .enumerate()
        .filter(|(_, &d)| d != 0.0)
        .map(|(i, _)| i)
        .collect();
    let t: Vec<_> = nodes
        .iter()
        .enumerate()
        .map(|(row, &col)| (row, col, 1.0))
        .collect();
    let extraction = SparseMat::from_triplets(nodes.len(), dim, &t)?;
    Ok(Perturbation {
        mode,
        marker: SparseMat::from_diagonal(&diag),
        extraction,
        nodes,
    })
}

/// `A_D = A_N + (2/h²) I_pert`.
pub fn assemble_laplacian_dirichlet(grid: &StaggeredGrid, pert: &Perturbation) -> Result<SparseMat> {
    let a_n = assemble_laplacian_neumann(grid)?;
    dirichlet_from(grid, &a_n, pert)
}

fn dirichlet_from(grid: &StaggeredGrid, a_n: &SparseMat, pert: &Perturbation) -> Result<SparseMat> {
    if pert.marker.rows() != grid.dim_velocity() {
        return Err(StokesError::ShapeMismatch(format!(
            "perturbation of size {} for velocity dimension {}",
            pert.marker.rows(),
            grid.dim_velocity()
        )));
    }
    let n = grid.n() as f64;
    a_n.linear_combination(1.0, &pert.marker, 2.0 * n * n)
}

/// Every operator of the discretization for one grid and perturbation mode.
#[derive(Debug, Clone)]
pub struct OperatorSet {
    pub grid: StaggeredGrid,
    pub derivative_1d: SparseMat,
    pub derivatives: VelocityDerivatives,
    /// Negative divergence `B`.
    pub divergence: SparseMat,
    /// Pressure gradient `Bᵀ`.
    pub gradient: SparseMat,
    /// Curl `C`.
    pub curl: SparseMat,
    pub laplacian_neumann: SparseMat,
    pub laplacian_dirichlet: SparseMat,
    pub perturbation: Perturbation,
}

impl OperatorSet {
    pub fn assemble(grid: &StaggeredGrid, mode: PerturbationMode) -> Result<Self> {
        let derivatives = assemble_velocity_derivatives(grid)?;
        let divergence = divergence_from(&derivatives)?;
        let gradient = divergence.transpose();
        let curl = curl_from(&derivatives)?;
        let laplacian_neumann = assemble_laplacian_neumann(grid)?;
        let perturbation = assemble_perturbation(grid, mode)?;
        let laplacian_dirichlet = dirichlet_from(grid, &laplacian_neumann, &perturbation)?;
        Ok(Self {
            grid: grid.clone(),
            derivative_1d: derivative_1d(grid.n())?,
            derivatives,
            divergence,
            gradient,
            curl,
            laplacian_neumann,
            laplacian_dirichlet,
            perturbation,
        })
    }

    pub fn mode(&self) -> PerturbationMode {
        self.perturbation.mode
    }

    /// Number of perturbed velocity nodes.
    pub fn rank(&self) -> usize {
        self.perturbation.rank()
    }

    pub fn extraction(&self) -> &SparseMat {
        &self.perturbation.extraction
    }

    /// Curl in its direct form `[B^u_y  -B^v_x]`, with
    /// `B^u_y = -(∂y_q)ᵀ` (u → q) and `B^v_x = -(∂x_q)ᵀ` (v → q).
    pub fn curl_direct(&self) -> Result<SparseMat> {
        let by_u = self.derivatives.dy_q.transpose().scale(-1.0);
        let bx_v = self.derivatives.dx_q.transpose().scale(-1.0);
        by_u.hstack(&bx_v.scale(-1.0))
    }

    /// Gradient components `(B^p_x, B^p_y) = (-(∂x_u)ᵀ, -(∂y_v)ᵀ)`.
    pub fn gradient_components(&self) -> (SparseMat, SparseMat) {
        (
            self.derivatives.dx_u.transpose().scale(-1.0),
            self.derivatives.dy_v.transpose().scale(-1.0),
        )
    }

    /// Look up an operator by its export name.
    pub fn by_name(&self, name: &str) -> Result<SparseMat> {
        Ok(match name {
            "B1d" | "D" => self.derivative_1d.clone(),
            "Bxu" => self.derivatives.dx_u.clone(),
            "Byv" => self.derivatives.dy_v.clone(),
            "Bxq" => self.derivatives.dx_q.clone(),
            "Byq" => self.derivatives.dy_q.clone(),
            "B" => self.divergence.clone(),
            "BT" | "G" => self.gradient.clone(),
            "C" => self.curl.clone(),
            "A_N" => self.laplacian_neumann.clone(),
            "A_D" => self.laplacian_dirichlet.clone(),
            "I_pert" => self.perturbation.marker.clone(),
            "U" => self.perturbation.extraction.clone(),
            other => return Err(StokesError::UnknownName(other.to_string())),
        })
    }

    pub const SPARSE_NAMES: [&'static str; 12] = [
        "B1d", "Bxu", "Byv", "Bxq", "Byq", "B", "BT", "C", "A_N", "A_D", "I_pert", "U",
    ];
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn grid(n: usize) -> StaggeredGrid {
        StaggeredGrid::new(n).unwrap()
    }

    fn naive_kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
        let (ar, ac, br, bc) = (a.nrows(), a.ncols(), b.nrows(), b.ncols());
        DMatrix::from_fn(ar * br, ac * bc, |i, j| a[(i / br, j / bc)] * b[(i % br, j % bc)])
    }

    #[test]
    fn derivative_1d_small() {
        let d = derivative_1d(2).unwrap().to_dense();
        assert_eq!(d, DMatrix::from_row_slice(2, 1, &[2.0, -2.0]));
        let d = derivative_1d(3).unwrap().to_dense();
        assert_eq!(
            d,
            DMatrix::from_row_slice(3, 2, &[3.0, 0.0, -3.0, 3.0, 0.0, -3.0])
        );
        assert!(derivative_1d(1).is_err());
    }

    #[test]
    fn derivative_1d_columns_sum_to_zero() {
        for n in 2..20 {
            let d = derivative_1d(n).unwrap();
            let sums = d.mul_vec_transposed(&vec![1.0; n]);
            assert!(sums.iter().all(|&s| s == 0.0));
        }
    }

    #[test]
    fn velocity_derivative_shapes() {
        let d = assemble_velocity_derivatives(&grid(4)).unwrap();
        assert_eq!(d.dx_u.shape(), (16, 12));
        assert_eq!(d.dy_v.shape(), (16, 12));
        assert_eq!(d.dx_q.shape(), (12, 9));
        assert_eq!(d.dy_q.shape(), (12, 9));
        let d = assemble_velocity_derivatives(&grid(2)).unwrap();
        assert_eq!(d.dx_u.shape(), (4, 2));
    }

    #[test]
    fn velocity_derivatives_match_naive_kron() {
        let g = grid(4);
        let d1 = derivative_1d(4).unwrap().to_dense();
        let i4 = DMatrix::<f64>::identity(4, 4);
        let i3 = DMatrix::<f64>::identity(3, 3);
        let d = assemble_velocity_derivatives(&g).unwrap();
        assert_eq!(d.dx_u.to_dense(), naive_kron(&i4, &d1));
        assert_eq!(d.dy_v.to_dense(), naive_kron(&d1, &i4));
        assert_eq!(d.dx_q.to_dense(), naive_kron(&i3, &d1));
        assert_eq!(d.dy_q.to_dense(), naive_kron(&d1, &i3));
    }

    #[test]
    fn divergence_shape_and_stencil() {
        let g = grid(4);
        let b = assemble_divergence(&g).unwrap();
        assert_eq!(b.shape(), (16, 24));
        for i in 0..b.rows() {
            let row: Vec<_> = b.row(i).collect();
            assert!(row.len() <= 4);
            assert!(row.iter().all(|(_, v)| v.abs() == 4.0));
        }
    }

    #[test]
    fn divergence_row_sums_n2() {
        // Hand computation at n = 2: each pressure cell touches one u and one
        // v face, with signs fixed by its position.
        let g = grid(2);
        let b = assemble_divergence(&g).unwrap();
        let sums = b.mul_vec(&[1.0; 4]);
        let dense = b.to_dense();
        let oracle: Vec<f64> = (0..4).map(|i| dense.row(i).iter().sum()).collect();
        assert_eq!(sums, oracle);
        assert_eq!(sums, vec![-4.0, 0.0, 0.0, 4.0]);
    }

    #[test]
    fn curl_shape_and_direct_form() {
        let ops = OperatorSet::assemble(&grid(4), PerturbationMode::Boundary).unwrap();
        assert_eq!(ops.curl.shape(), (9, 24));
        assert_eq!(ops.curl_direct().unwrap(), ops.curl);
        let bct = ops.divergence.matmul(&ops.curl.transpose()).unwrap();
        assert_eq!(bct.nnz(), 0);
    }

    #[test]
    fn neumann_laplacian_is_gram_sum() {
        for n in [2, 3, 4, 7] {
            let ops = OperatorSet::assemble(&grid(n), PerturbationMode::Boundary).unwrap();
            let gram = ops
                .gradient
                .matmul(&ops.divergence)
                .unwrap()
                .add(&ops.curl.transpose().matmul(&ops.curl).unwrap())
                .unwrap();
            assert_eq!(gram, ops.laplacian_neumann);
            let du = ops.grid.dim_u();
            assert_eq!(gram.submatrix(0, du, du, 2 * du).nnz(), 0);
            assert!(ops.laplacian_neumann.is_symmetric());
        }
    }

    #[test]
    fn neumann_laplacian_n2_is_positive_definite() {
        let a = assemble_laplacian_neumann(&grid(2)).unwrap().to_dense();
        assert_eq!(a.shape(), (4, 4));
        let eig = a.symmetric_eigenvalues();
        assert!(eig.min() > 0.0);
    }

    #[test]
    fn perturbation_ranks() {
        let p = assemble_perturbation(&grid(4), PerturbationMode::Boundary).unwrap();
        assert_eq!(p.rank(), 12);
        let p2 = assemble_perturbation(&grid(2), PerturbationMode::Boundary).unwrap();
        let f2 = assemble_perturbation(&grid(2), PerturbationMode::Full).unwrap();
        assert_eq!(p2.rank(), 4);
        assert!(p2.is_full_rank());
        assert_eq!(p2.marker, f2.marker);
        assert_eq!(p2.extraction, f2.extraction);
        let f = assemble_perturbation(&grid(4), PerturbationMode::Full).unwrap();
        assert_eq!(f.rank(), 24);
        for n in 2..12 {
            let p = assemble_perturbation(&grid(n), PerturbationMode::Boundary).unwrap();
            assert_eq!(p.rank(), 4 * (n - 1));
        }
    }

    #[test]
    fn perturbation_marks_wall_adjacent_tangential_nodes() {
        let g = grid(4);
        let p = assemble_perturbation(&g, PerturbationMode::Boundary).unwrap();
        let du = g.dim_u();
        for &k in &p.nodes {
            if k < du {
                let (_, iy) = g.node_index(crate::grid::NodeSet::U, k);
                assert!(iy == 0 || iy == g.n() - 1);
            } else {
                let (ix, _) = g.node_index(crate::grid::NodeSet::V, k - du);
                assert!(ix == 0 || ix == g.n() - 1);
            }
        }
    }

    #[test]
    fn extraction_identities() {
        for n in [2, 3, 5] {
            for mode in [PerturbationMode::Boundary, PerturbationMode::Full] {
                let p = assemble_perturbation(&grid(n), mode).unwrap();
                let u = &p.extraction;
                assert!((0..u.rows()).all(|i| {
                    let row: Vec<_> = u.row(i).collect();
                    row.len() == 1 && row[0].1 == 1.0
                }));
                assert_eq!(u.transpose().matmul(u).unwrap(), p.marker);
                assert_eq!(u.matmul(&u.transpose()).unwrap(), SparseMat::identity(p.rank()));
            }
        }
    }

    #[test]
    fn dirichlet_perturbation_magnitude() {
        let g = grid(4);
        let ops = OperatorSet::assemble(&g, PerturbationMode::Boundary).unwrap();
        let diff = ops.laplacian_dirichlet.sub(&ops.laplacian_neumann).unwrap();
        assert_eq!(diff.nnz(), 12);
        assert!(diff.triplets().all(|(i, j, v)| i == j && v == 32.0));
        let g = grid(2);
        let ops = OperatorSet::assemble(&g, PerturbationMode::Boundary).unwrap();
        let diff = ops.laplacian_dirichlet.sub(&ops.laplacian_neumann).unwrap();
        assert_eq!(diff.diagonal(), vec![8.0; 4]);
    }

    #[test]
    fn dirichlet_eigenvalues_dominate_neumann() {
        let ops = OperatorSet::assemble(&grid(4), PerturbationMode::Boundary).unwrap();
        let mut en: Vec<f64> = ops
            .laplacian_neumann
            .to_dense()
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .collect();
        let mut ed: Vec<f64> = ops
            .laplacian_dirichlet
            .to_dense()
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .collect();
        en.sort_by(f64::total_cmp);
        ed.sort_by(f64::total_cmp);
        assert!(ed.iter().zip(&en).all(|(d, n)| d >= n));
        assert!(ed[0] > en[0]);
        assert!(ops.laplacian_dirichlet.is_symmetric());
    }

    #[test]
    fn lookup_by_name() {
        let ops = OperatorSet::assemble(&grid(3), PerturbationMode::Boundary).unwrap();
        for name in OperatorSet::SPARSE_NAMES {
            ops.by_name(name).unwrap();
        }
        assert!(matches!(ops.by_name("nope"), Err(StokesError::UnknownName(_))));
        assert_eq!(ops.by_name("BT").unwrap(), ops.divergence.transpose());
    }
}
