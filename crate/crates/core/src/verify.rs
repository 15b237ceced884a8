//! Property suite over the discrete operators, with a serializable report.
//!
//! Every row compares a measured error against a tolerance. Integer-valued
//! properties (ranks, eigenvalue counts, iteration counts) report the
//! excess over the allowed value with tolerance zero. Rows whose
//! computation fails carry the error message, have no measurement and are
//! marked failed.

use std::io::Write;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, StokesError};
use crate::grid::StaggeredGrid;
use crate::linalg::{check_dense_cap, pseudoinverse, rank_of, symmetric_eigenvalues, Cutoff};
use crate::operators::{OperatorSet, PerturbationMode};
use crate::schur::{
    build_schur_dirichlet, build_schur_dirichlet_inverse, build_schur_neumann, count_nonunit_eigenvalues,
    laplacian_inverse_split_check, limiting_formula, schur_dense_oracle, HelmholtzProjectors,
    PressureConstant,
};
use crate::solver::{BvpConfig, BvpKind, SolveOptions, StokesSolver, TangentialData};
use crate::sparse::SparseMat;

/// Random velocity fields drawn per size for the Helmholtz split.
pub const HELMHOLTZ_SAMPLES: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRow {
    pub name: String,
    /// The identity being measured, in operator notation.
    pub property: String,
    pub n: usize,
    pub mode: PerturbationMode,
    pub measured_error: Option<f64>,
    pub tolerance: f64,
    pub passed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub runtime_ms: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub seed: u64,
    pub tol_scale: f64,
    pub checks: Vec<CheckRow>,
}

impl CheckReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckRow> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// One line per check; the seed and scale are repeated on every row.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "seed",
            "tol_scale",
            "name",
            "property",
            "n",
            "mode",
            "measured_error",
            "tolerance",
            "passed",
            "runtime_ms",
            "error",
        ])?;
        for c in &self.checks {
            w.write_record([
                self.seed.to_string(),
                self.tol_scale.to_string(),
                c.name.clone(),
                c.property.clone(),
                c.n.to_string(),
                c.mode.name().to_string(),
                c.measured_error.map(|e| e.to_string()).unwrap_or_default(),
                c.tolerance.to_string(),
                c.passed.to_string(),
                c.runtime_ms.map(|t| t.to_string()).unwrap_or_default(),
                c.error.clone().unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteOptions {
    pub sizes: Vec<usize>,
    pub modes: Vec<PerturbationMode>,
    pub seed: u64,
    /// Multiplies every tolerance.
    pub tol_scale: f64,
    pub record_runtime: bool,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self {
            sizes: vec![2, 3, 4, 8],
            modes: vec![PerturbationMode::Boundary],
            seed: 0,
            tol_scale: 1.0,
            record_runtime: false,
        }
    }
}

/// Runs every property for each `(n, mode)` pair.
pub fn run_suite(sizes: &[usize], modes: &[PerturbationMode]) -> Result<CheckReport> {
    run_suite_with(&SuiteOptions {
        sizes: sizes.to_vec(),
        modes: modes.to_vec(),
        ..SuiteOptions::default()
    })
}

/// Sizes run on separate threads; rows keep the `(n, mode, property)` order.
pub fn run_suite_with(opts: &SuiteOptions) -> Result<CheckReport> {
    if !(opts.tol_scale.is_finite() && opts.tol_scale > 0.0) {
        return Err(StokesError::InvalidTolerance(opts.tol_scale));
    }
    for &n in &opts.sizes {
        StaggeredGrid::new(n)?;
    }
    let per_size: Vec<Vec<CheckRow>> = std::thread::scope(|s| {
        let handles: Vec<_> = opts
            .sizes
            .iter()
            .map(|&n| {
                s.spawn(move || {
                    opts.modes
                        .iter()
                        .flat_map(|&mode| checks_for(n, mode, opts))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("check thread panicked"))
            .collect()
    });
    Ok(CheckReport {
        seed: opts.seed,
        tol_scale: opts.tol_scale,
        checks: per_size.into_iter().flatten().collect(),
    })
}

struct Ctx<'a> {
    n: usize,
    mode: PerturbationMode,
    opts: &'a SuiteOptions,
    rows: Vec<CheckRow>,
}

impl Ctx<'_> {
    fn record<F>(&mut self, name: &str, property: &str, tolerance: f64, f: F)
    where
        F: FnOnce() -> Result<f64>,
    {
        let tolerance = tolerance * self.opts.tol_scale;
        let start = Instant::now();
        let outcome = f();
        let runtime_ms = self
            .opts
            .record_runtime
            .then(|| start.elapsed().as_secs_f64() * 1e3);
        let (measured_error, passed, error) = match outcome {
            Ok(e) => (Some(e), e <= tolerance, None),
            Err(err) => (None, false, Some(err.to_string())),
        };
        self.rows.push(CheckRow {
            name: name.to_string(),
            property: property.to_string(),
            n: self.n,
            mode: self.mode,
            measured_error,
            tolerance,
            passed,
            runtime_ms,
            error,
        });
    }
}

fn excess(actual: usize, allowed: usize) -> f64 {
    actual.saturating_sub(allowed) as f64
}

fn deviation(actual: usize, expected: usize) -> f64 {
    actual.abs_diff(expected) as f64
}

fn dense_sd(ops: &OperatorSet) -> Result<DMatrix<f64>> {
    check_dense_cap(ops.grid.n())?;
    schur_dense_oracle(&ops.laplacian_dirichlet.to_dense(), &ops.divergence.to_dense())
}

fn random_velocity(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn checks_for(n: usize, mode: PerturbationMode, opts: &SuiteOptions) -> Vec<CheckRow> {
    let mut ctx = Ctx {
        n,
        mode,
        opts,
        rows: Vec::new(),
    };
    let ops = match StaggeredGrid::new(n).and_then(|g| OperatorSet::assemble(&g, mode)) {
        Ok(ops) => ops,
        Err(e) => {
            ctx.record("assembly", "operators assemble", 0.0, || Err(e));
            return ctx.rows;
        }
    };
    let inv_h2 = (n * n) as f64;
    operator_checks(&mut ctx, &ops, inv_h2);
    helmholtz_checks(&mut ctx, &ops);
    schur_checks(&mut ctx, &ops);
    solver_checks(&mut ctx, &ops);
    ctx.rows
}

fn operator_checks(ctx: &mut Ctx<'_>, ops: &OperatorSet, inv_h2: f64) {
    let b = &ops.divergence;
    let c = &ops.curl;
    ctx.record(
        "div-curl-orthogonality",
        "max(|B Cᵀ|, |C Bᵀ|) = 0",
        1e-12 * inv_h2,
        || {
            let bc = b.matmul(&c.transpose())?.max_abs();
            let cb = c.matmul(&b.transpose())?.max_abs();
            Ok(bc.max(cb))
        },
    );

    // B^u_x = ∂x_u and B^v_y = ∂y_v, so that B^p_x = -(B^u_x)ᵀ and B^p_y = -(B^v_y)ᵀ.
    let d = &ops.derivatives;
    let (bx_p, by_p) = ops.gradient_components();
    let by_u = d.dy_q.transpose().scale(-1.0);
    let bx_v = d.dx_q.transpose().scale(-1.0);
    ctx.record(
        "mixed-derivatives-u",
        "B^p_y B^u_x = B^q_x B^u_y",
        1e-12 * inv_h2,
        || {
            let lhs = by_p.matmul(&d.dx_u)?;
            let rhs = d.dx_q.matmul(&by_u)?;
            lhs.max_abs_diff(&rhs)
        },
    );
    ctx.record(
        "mixed-derivatives-v",
        "B^p_x B^v_y = B^q_y B^v_x",
        1e-12 * inv_h2,
        || {
            let lhs = bx_p.matmul(&d.dy_v)?;
            let rhs = d.dy_q.matmul(&bx_v)?;
            lhs.max_abs_diff(&rhs)
        },
    );
    ctx.record("curl-direct-form", "[B^u_y, -B^v_x] = C", 1e-12 * inv_h2, || {
        ops.curl_direct()?.max_abs_diff(c)
    });

    let gram = || -> Result<SparseMat> { b.transpose().matmul(b)?.add(&c.transpose().matmul(c)?) };
    ctx.record(
        "gram-sum-cross-blocks",
        "stored entries in the u-v blocks of BᵀB + CᵀC",
        0.0,
        || {
            let g = gram()?;
            let du = ops.grid.dim_u();
            let dim = ops.grid.dim_velocity();
            let uv = g.submatrix(0, du, du, dim).nnz();
            let vu = g.submatrix(du, dim, 0, du).nnz();
            Ok((uv + vu) as f64)
        },
    );
    ctx.record(
        "gram-sum-laplacian",
        "BᵀB + CᵀC = A_N",
        1e-12 * inv_h2,
        || gram()?.max_abs_diff(&ops.laplacian_neumann),
    );
}

fn helmholtz_checks(ctx: &mut Ctx<'_>, ops: &OperatorSet) {
    let n = ctx.n;
    ctx.record("divergence-rank", "rank B = n² - 1", 0.0, || {
        check_dense_cap(n)?;
        Ok(deviation(
            rank_of(&ops.divergence.to_dense(), Cutoff::Auto)?,
            n * n - 1,
        ))
    });
    ctx.record("curl-rank", "rank C = (n-1)²", 0.0, || {
        check_dense_cap(n)?;
        Ok(deviation(
            rank_of(&ops.curl.to_dense(), Cutoff::Auto)?,
            (n - 1) * (n - 1),
        ))
    });
    let seed = ctx.opts.seed;
    ctx.record(
        "helmholtz-split",
        "max(|B w_div|, |C w_curl|, |w - w_div - w_curl|) / |w|",
        1e-9,
        || {
            let proj = HelmholtzProjectors::new(ops)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (n as u64).rotate_left(32));
            let mut worst = 0.0_f64;
            for _ in 0..HELMHOLTZ_SAMPLES {
                let w = random_velocity(&mut rng, ops.grid.dim_velocity());
                let split = proj.split(&w);
                let w_norm = DVector::from_column_slice(&w).norm();
                let b_div = DVector::from_vec(ops.divergence.mul_vec(&split.divergence_free)).norm();
                let c_curl = DVector::from_vec(ops.curl.mul_vec(&split.curl_free)).norm();
                let recon = w
                    .iter()
                    .zip(&split.divergence_free)
                    .zip(&split.curl_free)
                    .map(|((a, b), c)| (a - b - c).powi(2))
                    .sum::<f64>()
                    .sqrt();
                worst = worst.max(b_div.max(c_curl).max(recon) / w_norm);
            }
            Ok(worst)
        },
    );
    let tol = if n >= 8 { 1e-7 } else { 1e-8 };
    ctx.record(
        "laplacian-inverse-split",
        "A_N⁻¹ = (BᵀB)⁺ + (CᵀC)⁺ (Frobenius)",
        tol,
        || laplacian_inverse_split_check(ops),
    );
}

fn schur_checks(ctx: &mut Ctx<'_>, ops: &OperatorSet) {
    let grid = ops.grid.clone();
    let n = ctx.n;
    let p = PressureConstant::new(&grid).projector_dense();

    let s_n = || -> Result<DMatrix<f64>> {
        check_dense_cap(n)?;
        schur_dense_oracle(&ops.laplacian_neumann.to_dense(), &ops.divergence.to_dense())
    };
    ctx.record(
        "neumann-schur-projector",
        "B A_N⁻¹ Bᵀ = I - 11ᵀ (Frobenius)",
        1e-8,
        || Ok((s_n()? - &p).norm()),
    );
    ctx.record(
        "neumann-schur-structured",
        "structured S_N = I - 11ᵀ (Frobenius)",
        1e-12,
        || Ok((build_schur_neumann(&grid).to_dense() - &p).norm()),
    );
    ctx.record(
        "neumann-schur-idempotent",
        "S_N² = S_N (Frobenius)",
        1e-10,
        || {
            let s = s_n()?;
            Ok((&s * &s - &s).norm())
        },
    );
    ctx.record("neumann-schur-nonunit-count", "#{λ(S_N) ≠ 1} = 1", 0.0, || {
        Ok(deviation(count_nonunit_eigenvalues(&s_n()?, 1e-8), 1))
    });

    ctx.record(
        "dirichlet-schur-structured",
        "P - Wᵀ K1⁻¹ W = B A_D⁻¹ Bᵀ (Frobenius)",
        1e-8,
        || {
            let dense = dense_sd(ops)?;
            Ok((build_schur_dirichlet(ops)?.to_dense() - dense).norm())
        },
    );
    ctx.record(
        "dirichlet-schur-inverse",
        "P + Wᵀ K2⁻¹ W = (B A_D⁻¹ Bᵀ)⁺ (Frobenius)",
        1e-7,
        || {
            let pinv = pseudoinverse(&dense_sd(ops)?, Cutoff::Auto)?;
            Ok((build_schur_dirichlet_inverse(ops)?.to_dense() - pinv).norm())
        },
    );
    ctx.record(
        "dirichlet-schur-composition",
        "S_D⁺ S_D = I on mean-zero pressures (Frobenius)",
        1e-8,
        || {
            let s = dense_sd(ops)?;
            let inv = build_schur_dirichlet_inverse(ops)?.to_dense();
            Ok((inv * s - &p).norm())
        },
    );

    let r = ops.rank();
    ctx.record("dirichlet-schur-eigen-range", "λ(S_D) ⊂ [0, 1]", 1e-9, || {
        let eig = symmetric_eigenvalues(&dense_sd(ops)?);
        let lo = eig.first().copied().unwrap_or(0.0);
        let hi = eig.last().copied().unwrap_or(0.0);
        Ok((-lo).max(hi - 1.0).max(0.0))
    });
    ctx.record(
        "dirichlet-schur-nonunit-count",
        "#{λ(S_D) ≠ 1} ≤ r + 1",
        0.0,
        || Ok(excess(count_nonunit_eigenvalues(&dense_sd(ops)?, 1e-8), r + 1)),
    );

    if ops.perturbation.is_full_rank() {
        let inv_h2 = (n * n) as f64;
        ctx.record(
            "limiting-case",
            "S_D⁺ = S_N + (2/h²)(B Bᵀ)⁺ (Frobenius)",
            1e-7,
            || {
                let sd_pinv = pseudoinverse(&dense_sd(ops)?, Cutoff::Auto)?;
                let b = ops.divergence.to_dense();
                let bbt_pinv = pseudoinverse(&(&b * b.transpose()), Cutoff::Auto)?;
                Ok((sd_pinv - &p - bbt_pinv * (2.0 * inv_h2)).norm())
            },
        );
        ctx.record(
            "limiting-case-separable",
            "separable S_N + (2/h²)(B Bᵀ)⁺ = (B A_D⁻¹ Bᵀ)⁺ (Frobenius)",
            1e-7,
            || {
                let sd_pinv = pseudoinverse(&dense_sd(ops)?, Cutoff::Auto)?;
                Ok((limiting_formula(&grid)?.to_dense() - sd_pinv).norm())
            },
        );
    }
}

fn solver_checks(ctx: &mut Ctx<'_>, ops: &OperatorSet) {
    let grid = ops.grid.clone();
    let mode = ctx.mode;
    let inv_h = grid.inv_h();
    let cavity = BvpConfig::lid_driven_cavity().with_mode(mode);
    let solved = StokesSolver::new(&grid, cavity).and_then(|s| {
        let f = s.rhs()?;
        s.solve(&f, &SolveOptions::default())
    });
    let solved = solved.map_err(|e| e.to_string());
    let fail = |e: &String| StokesError::Structural(e.clone());
    ctx.record(
        "cavity-coupled-residual",
        "Dirichlet cavity saddle residual / |f|",
        1e-8,
        || {
            let s = solved.as_ref().map_err(fail)?;
            Ok(s.coupled_residual)
        },
    );
    ctx.record("cavity-divergence", "|B u| / ((1/h) |u|)", 1e-8, || {
        let s = solved.as_ref().map_err(fail)?;
        let u_norm = DVector::from_vec(s.velocity()).norm();
        Ok(if u_norm > 0.0 {
            s.divergence_norm / (inv_h * u_norm)
        } else {
            s.divergence_norm
        })
    });
    ctx.record(
        "cavity-iterations",
        "pressure CG iterations with S_D⁺ ≤ 3",
        0.0,
        || {
            let s = solved.as_ref().map_err(fail)?;
            Ok(if s.converged {
                excess(s.schur_iters, 3)
            } else {
                f64::INFINITY
            })
        },
    );
    ctx.record(
        "neumann-iterations",
        "pressure CG iterations with S_N ≤ 2",
        0.0,
        || {
            let config = BvpConfig::new(BvpKind::Neumann, TangentialData::lid_driven()).with_mode(mode);
            let solver = StokesSolver::new(&grid, config)?;
            let s = solver.solve(&solver.rhs()?, &SolveOptions::default())?;
            Ok(if s.converged {
                excess(s.schur_iters, 2)
            } else {
                f64::INFINITY
            })
        },
    );
}
