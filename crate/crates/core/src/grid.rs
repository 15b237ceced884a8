//! Fully-staggered (MAC) grids on the unit square.
//!
//! Four tensor-product node sets share one pair of 1D axes:
//!
//! | field | x axis  | y axis  | size          |
//! |-------|---------|---------|---------------|
//! | u     | aligned | shifted | (n-1) * n     |
//! | v     | shifted | aligned | n * (n-1)     |
//! | p     | shifted | shifted | n * n         |
//! | q     | aligned | aligned | (n-1) * (n-1) |
//!
//! A node `(ix, iy)` on a set with x-size `sx` has flat index `iy * sx + ix`
//! (x fastest). With this ordering `I ⊗ D` differentiates along x and `D ⊗ I`
//! along y, which every assembled operator relies on.

use serde::Serialize;

use crate::error::{Result, StokesError};

/// Which 1D discretization of `(0, 1)` an axis uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum AxisKind {
    /// `h, 2h, ..., 1 - h` (n - 1 nodes).
    Aligned,
    /// `h/2, 3h/2, ..., 1 - h/2` (n nodes).
    Shifted,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridAxis {
    pub kind: AxisKind,
    pub coordinates: Vec<f64>,
}

impl GridAxis {
    pub fn count(&self) -> usize {
        self.coordinates.len()
    }
}

/// The four staggered node sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeSet {
    U,
    V,
    P,
    Q,
}

impl NodeSet {
    pub const ALL: [NodeSet; 4] = [NodeSet::U, NodeSet::V, NodeSet::P, NodeSet::Q];

    /// Axis kinds as `(x, y)`.
    pub fn axes(self) -> (AxisKind, AxisKind) {
        match self {
            NodeSet::U => (AxisKind::Aligned, AxisKind::Shifted),
            NodeSet::V => (AxisKind::Shifted, AxisKind::Aligned),
            NodeSet::P => (AxisKind::Shifted, AxisKind::Shifted),
            NodeSet::Q => (AxisKind::Aligned, AxisKind::Aligned),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            NodeSet::U => "u",
            NodeSet::V => "v",
            NodeSet::P => "p",
            NodeSet::Q => "q",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StaggeredGrid {
    n: usize,
    h: f64,
    aligned: GridAxis,
    shifted: GridAxis,
}

impl StaggeredGrid {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(StokesError::InvalidSize(n));
        }
        let h = 1.0 / n as f64;
        let aligned = GridAxis {
            kind: AxisKind::Aligned,
            coordinates: (1..n).map(|i| i as f64 / n as f64).collect(),
        };
        let shifted = GridAxis {
            kind: AxisKind::Shifted,
            coordinates: (0..n).map(|i| (2 * i + 1) as f64 / (2 * n) as f64).collect(),
        };
        Ok(Self {
            n,
            h,
            aligned,
            shifted,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// `1/h`, exact as a float because it is the integer `n`.
    pub fn inv_h(&self) -> f64 {
        self.n as f64
    }

    pub fn dim_u(&self) -> usize {
        self.n * (self.n - 1)
    }

    pub fn dim_v(&self) -> usize {
        (self.n - 1) * self.n
    }

    pub fn dim_p(&self) -> usize {
        self.n * self.n
    }

    pub fn dim_q(&self) -> usize {
        (self.n - 1) * (self.n - 1)
    }

    /// Length of a stacked `(u, v)` velocity vector.
    pub fn dim_velocity(&self) -> usize {
        self.dim_u() + self.dim_v()
    }

    pub fn axis(&self, kind: AxisKind) -> &GridAxis {
        match kind {
            AxisKind::Aligned => &self.aligned,
            AxisKind::Shifted => &self.shifted,
        }
    }

    pub fn axis_len(&self, kind: AxisKind) -> usize {
        match kind {
            AxisKind::Aligned => self.n - 1,
            AxisKind::Shifted => self.n,
        }
    }

    /// `(sx, sy)` node counts of a set.
    pub fn shape(&self, set: NodeSet) -> (usize, usize) {
        let (ax, ay) = set.axes();
        (self.axis_len(ax), self.axis_len(ay))
    }

    pub fn dim(&self, set: NodeSet) -> usize {
        let (sx, sy) = self.shape(set);
        sx * sy
    }

    pub fn flat_index(&self, set: NodeSet, ix: usize, iy: usize) -> usize {
        let (sx, _) = self.shape(set);
        iy * sx + ix
    }

    /// Inverse of [`flat_index`](Self::flat_index).
    pub fn node_index(&self, set: NodeSet, flat: usize) -> (usize, usize) {
        let (sx, _) = self.shape(set);
        (flat % sx, flat / sx)
    }

    pub fn coordinates(&self, set: NodeSet, flat: usize) -> (f64, f64) {
        let (ax, ay) = set.axes();
        let (ix, iy) = self.node_index(set, flat);
        (self.axis(ax).coordinates[ix], self.axis(ay).coordinates[iy])
    }
}
