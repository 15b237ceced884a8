//! `stokes-verify`: property checks, operator export, cavity solves and
//! preconditioner iteration studies for the staggered Stokes discretization.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use stokes_schur::io::{
    write_matrix_market, write_matrix_market_dense, write_solution_csv, write_study_csv, write_study_json,
};
use stokes_schur::linalg::CgOptions;
use stokes_schur::schur::{
    build_schur_dirichlet, build_schur_dirichlet_inverse, build_schur_neumann, limiting_formula,
};
use stokes_schur::solver::{iteration_study, BvpConfig, BvpKind, SolveOptions, StokesSolver, TangentialData};
use stokes_schur::{run_suite_with, OperatorSet, PerturbationMode, StaggeredGrid, SuiteOptions};

#[derive(Parser)]
#[command(name = "stokes-verify", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the property suite and print a report.
    Check(CheckArgs),
    /// Write one operator in Matrix Market format.
    Export(ExportArgs),
    /// Solve a boundary-value problem and write the fields as CSV.
    Solve(SolveArgs),
    /// Pressure-CG iteration counts for every preconditioner.
    Study(StudyArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Boundary,
    Full,
}

impl From<Mode> for PerturbationMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Boundary => PerturbationMode::Boundary,
            Mode::Full => PerturbationMode::Full,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Bvp {
    Dirichlet,
    Neumann,
}

impl From<Bvp> for BvpKind {
    fn from(b: Bvp) -> Self {
        match b {
            Bvp::Dirichlet => BvpKind::Dirichlet,
            Bvp::Neumann => BvpKind::Neumann,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args)]
struct CheckArgs {
    #[arg(long, value_delimiter = ',', default_value = "2,3,4,8")]
    n: Vec<usize>,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "boundary")]
    mode: Vec<Mode>,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1.0)]
    tol_scale: f64,
    /// Include per-check wall-clock times (makes the report nondeterministic).
    #[arg(long)]
    timings: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    n: usize,
    /// Sparse: B1d Bxu Byv Bxq Byq B BT C A_N A_D I_pert U.
    /// Dense: S_N S_D S_D_inv S_lim_inv.
    #[arg(long)]
    op: String,
    #[arg(long, value_enum, default_value = "boundary")]
    mode: Mode,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    n: usize,
    #[arg(long, value_enum, default_value = "dirichlet")]
    bvp: Bvp,
    #[arg(long, value_enum, default_value = "boundary")]
    mode: Mode,
    /// Unit tangential velocity on the top wall; other walls at rest.
    #[arg(long)]
    cavity: bool,
    #[arg(long, default_value_t = 1.0)]
    tol_scale: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct StudyArgs {
    #[arg(long, value_delimiter = ',', default_value = "4,8,16,32")]
    n: Vec<usize>,
    #[arg(long, value_enum, default_value = "dirichlet")]
    bvp: Bvp,
    #[arg(long, value_enum, default_value = "boundary")]
    mode: Mode,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    #[arg(long, default_value_t = 1.0)]
    tol_scale: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn output(path: Option<&PathBuf>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn check(args: &CheckArgs) -> anyhow::Result<bool> {
    let report = run_suite_with(&SuiteOptions {
        sizes: args.n.clone(),
        modes: args.mode.iter().map(|&m| m.into()).collect(),
        seed: args.seed,
        tol_scale: args.tol_scale,
        record_runtime: args.timings,
    })?;
    let mut out = output(args.out.as_ref())?;
    match args.format {
        Format::Json => writeln!(out, "{}", report.to_json()?)?,
        Format::Csv => report.write_csv(&mut out)?,
    }
    out.flush()?;
    for row in report.failures() {
        eprintln!(
            "FAILED {} n={} mode={}: {}",
            row.name,
            row.n,
            row.mode.name(),
            row.error
                .clone()
                .unwrap_or_else(|| format!("{:?} > {}", row.measured_error, row.tolerance))
        );
    }
    Ok(report.all_passed())
}

fn export(args: &ExportArgs) -> anyhow::Result<()> {
    let grid = StaggeredGrid::new(args.n)?;
    let ops = OperatorSet::assemble(&grid, args.mode.into())?;
    let dense = match args.op.as_str() {
        "S_N" => Some(build_schur_neumann(&grid)),
        "S_D" => Some(build_schur_dirichlet(&ops)?),
        "S_D_inv" => Some(build_schur_dirichlet_inverse(&ops)?),
        "S_lim_inv" => Some(limiting_formula(&grid)?),
        _ => None,
    };
    let mut out = output(args.out.as_ref())?;
    match dense {
        Some(rep) => write_matrix_market_dense(&rep.to_dense(), &mut out)?,
        None => write_matrix_market(&ops.by_name(&args.op)?, &mut out)?,
    }
    out.flush()?;
    Ok(())
}

fn cg_options(tol_scale: f64) -> anyhow::Result<CgOptions> {
    if !(tol_scale.is_finite() && tol_scale > 0.0) {
        bail!("--tol-scale must be positive, got {tol_scale}");
    }
    let base = SolveOptions::default().cg;
    Ok(CgOptions {
        rel_tol: base.rel_tol * tol_scale,
        ..base
    })
}

fn solve(args: &SolveArgs) -> anyhow::Result<bool> {
    let grid = StaggeredGrid::new(args.n)?;
    let tangential = if args.cavity {
        TangentialData::lid_driven()
    } else {
        TangentialData::zero()
    };
    let config = BvpConfig::new(args.bvp.into(), tangential).with_mode(args.mode.into());
    let solver = StokesSolver::new(&grid, config)?;
    let opts = SolveOptions {
        preconditioner: None,
        cg: cg_options(args.tol_scale)?,
    };
    let sol = solver.solve(&solver.rhs()?, &opts)?;
    let mut out = output(args.out.as_ref())?;
    write_solution_csv(&grid, &sol, &mut out)?;
    out.flush()?;
    eprintln!(
        "n={} iterations={} converged={} coupled_residual={:e} divergence={:e}",
        args.n, sol.schur_iters, sol.converged, sol.coupled_residual, sol.divergence_norm
    );
    Ok(sol.converged)
}

fn study(args: &StudyArgs) -> anyhow::Result<()> {
    let config = BvpConfig::new(args.bvp.into(), TangentialData::lid_driven()).with_mode(args.mode.into());
    let rows = iteration_study(&args.n, &config, &cg_options(args.tol_scale)?)?;
    let mut out = output(args.out.as_ref())?;
    match args.format {
        Format::Json => write_study_json(&rows, &mut out)?,
        Format::Csv => write_study_csv(&rows, &mut out)?,
    }
    out.flush()?;
    Ok(())
}

fn run(cli: &Cli) -> anyhow::Result<bool> {
    match &cli.command {
        Command::Check(a) => check(a),
        Command::Export(a) => export(a).map(|()| true),
        Command::Solve(a) => solve(a),
        Command::Study(a) => study(a).map(|()| true),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
