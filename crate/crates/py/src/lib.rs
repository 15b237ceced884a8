//! Python bindings for the staggered Stokes operators and Schur complements.
//! Matrices cross the boundary as nested lists or `(rows, cols, triplets)`.

use nalgebra::DMatrix;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use stokes_schur::io::write_matrix_market;
use stokes_schur::linalg::LinearOperator;
use stokes_schur::schur::{
    build_schur_dirichlet, build_schur_dirichlet_inverse, build_schur_neumann, limiting_formula, SchurRep,
};
use stokes_schur::solver::{BvpConfig, BvpKind, SaddleSolution, SolveOptions, StokesSolver, TangentialData};
use stokes_schur::{NodeSet, OperatorSet, PerturbationMode, StaggeredGrid, StokesError, SuiteOptions};

fn py_err(e: StokesError) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn node_set(name: &str) -> PyResult<NodeSet> {
    NodeSet::ALL
        .into_iter()
        .find(|s| s.name() == name)
        .ok_or_else(|| PyValueError::new_err(format!("unknown node set {name:?}")))
}

fn parse_mode(name: &str) -> PyResult<PerturbationMode> {
    name.parse().map_err(py_err)
}

/// `(rows, cols, [(i, j, value), ...])`.
type Triplets = (usize, usize, Vec<(usize, usize, f64)>);

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

#[pyclass(name = "Grid", frozen)]
struct PyGrid(StaggeredGrid);

#[pymethods]
impl PyGrid {
    #[new]
    fn new(n: usize) -> PyResult<Self> {
        StaggeredGrid::new(n).map(Self).map_err(py_err)
    }

    #[getter]
    fn n(&self) -> usize {
        self.0.n()
    }

    #[getter]
    fn h(&self) -> f64 {
        self.0.h()
    }

    /// Number of nodes in `"u"`, `"v"`, `"p"` or `"q"`.
    fn dim(&self, set: &str) -> PyResult<usize> {
        Ok(self.0.dim(node_set(set)?))
    }

    fn coordinates(&self, set: &str, index: usize) -> PyResult<(f64, f64)> {
        let set = node_set(set)?;
        if index >= self.0.dim(set) {
            return Err(PyValueError::new_err(format!("index {index} out of range")));
        }
        Ok(self.0.coordinates(set, index))
    }

    fn __repr__(&self) -> String {
        format!("Grid(n={})", self.0.n())
    }
}

#[pyclass(name = "Operators", frozen)]
struct PyOperators(OperatorSet);

impl PyOperators {
    fn schur(&self, name: &str) -> PyResult<SchurRep> {
        let grid = &self.0.grid;
        match name {
            "S_N" => Ok(build_schur_neumann(grid)),
            "S_D" => build_schur_dirichlet(&self.0).map_err(py_err),
            "S_D_inv" => build_schur_dirichlet_inverse(&self.0).map_err(py_err),
            "S_lim_inv" => limiting_formula(grid).map_err(py_err),
            other => Err(PyValueError::new_err(format!("unknown Schur form {other:?}"))),
        }
    }
}

#[pymethods]
impl PyOperators {
    #[new]
    #[pyo3(signature = (n, mode = "boundary"))]
    fn new(n: usize, mode: &str) -> PyResult<Self> {
        let grid = StaggeredGrid::new(n).map_err(py_err)?;
        OperatorSet::assemble(&grid, parse_mode(mode)?)
            .map(Self)
            .map_err(py_err)
    }

    #[getter]
    fn n(&self) -> usize {
        self.0.grid.n()
    }

    #[getter]
    fn mode(&self) -> &'static str {
        self.0.mode().name()
    }

    /// Number of perturbed velocity nodes.
    #[getter]
    fn rank(&self) -> usize {
        self.0.rank()
    }

    #[staticmethod]
    fn names() -> Vec<&'static str> {
        OperatorSet::SPARSE_NAMES.to_vec()
    }

    /// `(rows, cols, [(i, j, value), ...])` with 0-based indices.
    fn triplets(&self, name: &str) -> PyResult<Triplets> {
        let m = self.0.by_name(name).map_err(py_err)?;
        Ok((m.rows(), m.cols(), m.triplets().collect()))
    }

    fn dense(&self, name: &str) -> PyResult<Vec<Vec<f64>>> {
        Ok(rows_of(&self.0.by_name(name).map_err(py_err)?.to_dense()))
    }

    /// Dense `"S_N"`, `"S_D"`, `"S_D_inv"` or `"S_lim_inv"`.
    fn schur_dense(&self, name: &str) -> PyResult<Vec<Vec<f64>>> {
        Ok(rows_of(&self.schur(name)?.to_dense()))
    }

    /// Applies a structured Schur form to a pressure vector.
    fn schur_apply(&self, name: &str, x: Vec<f64>) -> PyResult<Vec<f64>> {
        let rep = self.schur(name)?;
        if x.len() != rep.dim() {
            return Err(PyValueError::new_err(format!(
                "expected {} pressure values, got {}",
                rep.dim(),
                x.len()
            )));
        }
        Ok(rep.apply(&x))
    }

    fn matrix_market(&self, name: &str) -> PyResult<String> {
        let m = self.0.by_name(name).map_err(py_err)?;
        let mut buf = Vec::new();
        write_matrix_market(&m, &mut buf).map_err(py_err)?;
        Ok(String::from_utf8(buf).expect("matrix market output is ASCII"))
    }
}

#[pyclass(name = "Solution", frozen, get_all)]
struct PySolution {
    u: Vec<f64>,
    v: Vec<f64>,
    p: Vec<f64>,
    iterations: usize,
    converged: bool,
    coupled_residual: f64,
    divergence_norm: f64,
}

impl From<SaddleSolution> for PySolution {
    fn from(s: SaddleSolution) -> Self {
        Self {
            u: s.u,
            v: s.v,
            p: s.p,
            iterations: s.schur_iters,
            converged: s.converged,
            coupled_residual: s.coupled_residual,
            divergence_norm: s.divergence_norm,
        }
    }
}

/// Solves the enclosed Stokes problem; `cavity` drives the top wall at unit speed.
#[pyfunction]
#[pyo3(signature = (n, bvp = "dirichlet", mode = "boundary", cavity = true))]
fn solve(n: usize, bvp: &str, mode: &str, cavity: bool) -> PyResult<PySolution> {
    let grid = StaggeredGrid::new(n).map_err(py_err)?;
    let kind: BvpKind = bvp.parse().map_err(py_err)?;
    let tangential = if cavity {
        TangentialData::lid_driven()
    } else {
        TangentialData::zero()
    };
    let config = BvpConfig::new(kind, tangential).with_mode(parse_mode(mode)?);
    let solver = StokesSolver::new(&grid, config).map_err(py_err)?;
    let f = solver.rhs().map_err(py_err)?;
    solver
        .solve(&f, &SolveOptions::default())
        .map(PySolution::from)
        .map_err(py_err)
}

/// Runs the property suite and returns the report as JSON.
#[pyfunction]
#[pyo3(signature = (sizes, modes = vec!["boundary".to_string()], seed = 0, tol_scale = 1.0))]
fn run_suite(sizes: Vec<usize>, modes: Vec<String>, seed: u64, tol_scale: f64) -> PyResult<String> {
    let modes = modes
        .iter()
        .map(|m| parse_mode(m))
        .collect::<PyResult<Vec<_>>>()?;
    let report = stokes_schur::run_suite_with(&SuiteOptions {
        sizes,
        modes,
        seed,
        tol_scale,
        record_runtime: false,
    })
    .map_err(py_err)?;
    report.to_json().map_err(py_err)
}

#[pymodule(name = "stokes_schur")]
fn init_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGrid>()?;
    m.add_class::<PyOperators>()?;
    m.add_class::<PySolution>()?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(run_suite, m)?)?;
    Ok(())
}
