//! Matrix Market and CSV export.

use std::io::{BufRead, Write};

use nalgebra::DMatrix;

use crate::error::{Result, StokesError};
use crate::grid::{NodeSet, StaggeredGrid};
use crate::solver::{SaddleSolution, StudyRow};
use crate::sparse::SparseMat;

pub const COORDINATE_HEADER: &str = "%%MatrixMarket matrix coordinate real general";
pub const ARRAY_HEADER: &str = "%%MatrixMarket matrix array real general";

/// Writes a sparse matrix in coordinate format with 1-based indices.
pub fn write_matrix_market<W: Write>(m: &SparseMat, mut out: W) -> Result<()> {
    writeln!(out, "{COORDINATE_HEADER}")?;
    writeln!(out, "{} {} {}", m.rows(), m.cols(), m.nnz())?;
    for (i, j, v) in m.triplets() {
        writeln!(out, "{} {} {}", i + 1, j + 1, v)?;
    }
    Ok(())
}

/// Writes a dense matrix in array format (column-major).
pub fn write_matrix_market_dense<W: Write>(m: &DMatrix<f64>, mut out: W) -> Result<()> {
    writeln!(out, "{ARRAY_HEADER}")?;
    writeln!(out, "{} {}", m.nrows(), m.ncols())?;
    for v in m.iter() {
        writeln!(out, "{v}")?;
    }
    Ok(())
}

fn parse_err(line: usize, msg: &str) -> StokesError {
    StokesError::Io(std::io::Error::new(
        std::io::ErrorKind::InvalidData,
        format!("matrix market line {line}: {msg}"),
    ))
}

/// Reads a coordinate-format real general matrix.
pub fn read_matrix_market<R: BufRead>(input: R) -> Result<SparseMat> {
    let mut lines = input.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| parse_err(1, "empty input"))?;
    if !header?.trim().eq_ignore_ascii_case(COORDINATE_HEADER) {
        return Err(parse_err(1, "unsupported header"));
    }
    let mut size: Option<(usize, usize, usize)> = None;
    let mut triplets = Vec::new();
    for (k, line) in lines {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('%') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        match size {
            None => {
                let nums: std::result::Result<Vec<usize>, _> = fields.iter().map(|f| f.parse()).collect();
                match nums.as_deref() {
                    Ok([r, c, nnz]) => size = Some((*r, *c, *nnz)),
                    _ => return Err(parse_err(k + 1, "bad size line")),
                }
            }
            Some(_) => {
                let [i, j, v] = fields[..] else {
                    return Err(parse_err(k + 1, "expected `row col value`"));
                };
                let i: usize = i.parse().map_err(|_| parse_err(k + 1, "bad row"))?;
                let j: usize = j.parse().map_err(|_| parse_err(k + 1, "bad column"))?;
                let v: f64 = v.parse().map_err(|_| parse_err(k + 1, "bad value"))?;
                if i == 0 || j == 0 {
                    return Err(parse_err(k + 1, "indices are 1-based"));
                }
                triplets.push((i - 1, j - 1, v));
            }
        }
    }
    let (rows, cols, nnz) = size.ok_or_else(|| parse_err(2, "missing size line"))?;
    if triplets.len() != nnz {
        return Err(parse_err(0, "entry count does not match header"));
    }
    SparseMat::from_triplets(rows, cols, &triplets)
}

/// One row per velocity and pressure node:
/// `field,ix,iy,x,y,value` with `field` in `u`, `v`, `p`.
pub fn write_solution_csv<W: Write>(grid: &StaggeredGrid, sol: &SaddleSolution, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["field", "ix", "iy", "x", "y", "value"])?;
    for (set, values) in [(NodeSet::U, &sol.u), (NodeSet::V, &sol.v), (NodeSet::P, &sol.p)] {
        if values.len() != grid.dim(set) {
            return Err(StokesError::ShapeMismatch(format!(
                "{} field has {} values for {} nodes",
                set.name(),
                values.len(),
                grid.dim(set)
            )));
        }
        for (k, value) in values.iter().enumerate() {
            let (ix, iy) = grid.node_index(set, k);
            let (x, y) = grid.coordinates(set, k);
            w.write_record([
                set.name().to_string(),
                ix.to_string(),
                iy.to_string(),
                x.to_string(),
                y.to_string(),
                value.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `n,bvp,mode,preconditioner,iterations,converged,rel_residual`.
pub fn write_study_csv<W: Write>(rows: &[StudyRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_study_json<W: Write>(rows: &[StudyRow], mut out: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, rows)?;
    writeln!(out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{OperatorSet, PerturbationMode};
    use crate::solver::{build_rhs, solve_stokes, BvpConfig};
    use proptest::prelude::*;

    #[test]
    fn coordinate_header_is_exact() {
        let g = StaggeredGrid::new(4).unwrap();
        let ops = OperatorSet::assemble(&g, PerturbationMode::Boundary).unwrap();
        let mut buf = Vec::new();
        write_matrix_market(&ops.laplacian_neumann, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next(),
            Some("%%MatrixMarket matrix coordinate real general")
        );
        assert_eq!(
            lines.next().unwrap(),
            format!("24 24 {}", ops.laplacian_neumann.nnz())
        );
        assert_eq!(lines.next(), Some("1 1 48"));
        let back = read_matrix_market(text.as_bytes()).unwrap();
        assert_eq!(back, ops.laplacian_neumann);
    }

    #[test]
    fn dense_array_layout_is_column_major() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.5]);
        let mut buf = Vec::new();
        write_matrix_market_dense(&m, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "%%MatrixMarket matrix array real general\n2 2\n1\n3\n2\n4.5\n"
        );
    }

    #[test]
    fn malformed_input_is_rejected() {
        let bad = [
            "",
            "%%MatrixMarket matrix array real general\n1 1\n1\n",
            "%%MatrixMarket matrix coordinate real general\n2 2 1\n0 1 1.0\n",
            "%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 1.0\n",
            "%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 1.0\n",
        ];
        for text in bad {
            assert!(read_matrix_market(text.as_bytes()).is_err(), "{text:?}");
        }
    }

    #[test]
    fn solution_csv_row_count() {
        let g = StaggeredGrid::new(4).unwrap();
        let cfg = BvpConfig::lid_driven_cavity();
        let sol = solve_stokes(&g, &cfg, &build_rhs(&g, &cfg).unwrap()).unwrap();
        let mut buf = Vec::new();
        write_solution_csv(&g, &sol, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + g.dim_u() + g.dim_v() + g.dim_p());
        assert!(text.starts_with("field,ix,iy,x,y,value\n"));
    }

    #[test]
    fn study_outputs() {
        use crate::linalg::CgOptions;
        use crate::solver::iteration_study;
        let rows = iteration_study(&[2, 4], &BvpConfig::lid_driven_cavity(), &CgOptions::default()).unwrap();
        let mut buf = Vec::new();
        write_study_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("n,bvp,mode,preconditioner,iterations,converged,rel_residual\n"));
        assert_eq!(text.lines().count(), rows.len() + 1);
        assert!(text.contains(",dirichlet,boundary,dirichlet-rank-r,"));
        let mut buf = Vec::new();
        write_study_json(&rows, &mut buf).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&buf).unwrap();
        assert_eq!(v.as_array().unwrap().len(), rows.len());
    }

    proptest! {
        #[test]
        fn coordinate_roundtrip(
            rows in 1usize..6,
            cols in 1usize..6,
            entries in proptest::collection::vec((0usize..6, 0usize..6, -1e3f64..1e3), 0..20),
        ) {
            let t: Vec<_> = entries.into_iter().filter(|(i, j, _)| *i < rows && *j < cols).collect();
            let m = SparseMat::from_triplets(rows, cols, &t).unwrap();
            let mut buf = Vec::new();
            write_matrix_market(&m, &mut buf).unwrap();
            prop_assert_eq!(read_matrix_market(buf.as_slice()).unwrap(), m);
        }
    }
}
