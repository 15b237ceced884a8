//! Fully-staggered finite-difference discretization of the enclosed 2D
//! Stokes problem, with the pressure Schur complement in its structured
//! forms: an identity-minus-rank-one projector for free-slip walls and a
//! low-rank Woodbury correction of it for tangential Dirichlet data.

pub mod error;
pub mod grid;
pub mod io;
pub mod linalg;
pub mod operators;
pub mod schur;
pub mod solver;
pub mod sparse;
pub mod verify;

pub use error::{Result, StokesError};
pub use grid::{AxisKind, GridAxis, NodeSet, StaggeredGrid};
pub use operators::{OperatorSet, PerturbationMode};
pub use sparse::SparseMat;
pub use verify::{run_suite, run_suite_with, CheckReport, CheckRow, SuiteOptions};
