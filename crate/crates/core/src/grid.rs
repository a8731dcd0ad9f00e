//! Uniform rectilinear mesh geometry, indexing, and boundary topology.
//!
//! Cells are half-open boxes `[x_{i-1/2}, x_{i+1/2})`, so every position maps
//! to exactly one cell. Index triples always have three components; axes
//! beyond the spatial dimension carry one cell of unit extent.

use crate::math;
use crate::error::{Error, Result};

/// Boundary condition along one axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundaryCondition {
    Periodic,
    /// Zero-flux physical boundary; particles reflect.
    HomogeneousNeumann,
}

/// Direction along an axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dir {
    Minus,
    Plus,
}

/// Geometry of a uniform mesh: cell counts, extents, spacing, cell volume,
/// and per-axis boundary conditions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    dim: usize,
    cells: [usize; 3],
    extents: [f64; 3],
    spacing: [f64; 3],
    bc: [BoundaryCondition; 3],
}

impl GridSpec {
    /// Build a grid of dimension `dim` from per-axis cell counts, extents, and
    /// boundary conditions (`dim` entries each; trailing axes are padded with
    /// one cell of unit extent).
    pub fn new(
        dim: usize,
        cells: &[usize],
        extents: &[f64],
        bc: &[BoundaryCondition],
    ) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidGrid("dimension must be 1, 2, or 3"));
        }
        if cells.len() != dim || extents.len() != dim || bc.len() != dim {
            return Err(Error::InvalidGrid("per-axis arguments must have `dim` entries"));
        }
        let mut c = [1usize; 3];
        let mut e = [1.0f64; 3];
        let mut b = [BoundaryCondition::Periodic; 3];
        for axis in 0..dim {
            if cells[axis] == 0 {
                return Err(Error::InvalidGrid("cell count must be positive"));
            }
            if !(extents[axis] > 0.0 && extents[axis].is_finite()) {
                return Err(Error::InvalidGrid("extent must be positive and finite"));
            }
            c[axis] = cells[axis];
            e[axis] = extents[axis];
            b[axis] = bc[axis];
        }
        let mut spacing = [1.0f64; 3];
        for axis in 0..dim {
            spacing[axis] = e[axis] / c[axis] as f64;
        }
        Ok(GridSpec {
            dim,
            cells: c,
            extents: e,
            spacing,
            bc: b,
        })
    }

    /// 1D convenience constructor on `[0, extent)`.
    pub fn line(cells: usize, extent: f64, bc: BoundaryCondition) -> Result<Self> {
        Self::new(1, &[cells], &[extent], &[bc])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cells(&self) -> [usize; 3] {
        self.cells
    }

    pub fn extents(&self) -> [f64; 3] {
        self.extents
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn bc(&self) -> [BoundaryCondition; 3] {
        self.bc
    }

    pub fn cell_count(&self) -> usize {
        self.cells[0] * self.cells[1] * self.cells[2]
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing[0] * self.spacing[1] * self.spacing[2]
    }

    /// Area of a face normal to `axis`.
    pub fn face_area(&self, axis: usize) -> f64 {
        self.cell_volume() / self.spacing[axis]
    }

    pub fn contains(&self, cell: [usize; 3]) -> bool {
        cell[0] < self.cells[0] && cell[1] < self.cells[1] && cell[2] < self.cells[2]
    }

    /// Flat index with x fastest.
    #[inline]
    pub fn linear(&self, cell: [usize; 3]) -> usize {
        debug_assert!(self.contains(cell));
        (cell[2] * self.cells[1] + cell[1]) * self.cells[0] + cell[0]
    }

    #[inline]
    pub fn from_linear(&self, linear: usize) -> [usize; 3] {
        debug_assert!(linear < self.cell_count());
        let i = linear % self.cells[0];
        let rest = linear / self.cells[0];
        [i, rest % self.cells[1], rest / self.cells[1]]
    }

    /// Neighboring cell across the `dir` face along `axis`, or `None` at a
    /// physical (Neumann) boundary. Periodic axes wrap.
    ///
    /// Infallible companion of [`GridSpec::neighbor`] for callers that already
    /// hold a valid cell index.
    #[inline]
    pub fn neighbor_wrapped(&self, cell: [usize; 3], axis: usize, dir: Dir) -> Option<[usize; 3]> {
        debug_assert!(axis < self.dim && self.contains(cell));
        let n = self.cells[axis];
        let mut out = cell;
        out[axis] = match (dir, self.bc[axis]) {
            (Dir::Plus, BoundaryCondition::Periodic) => (cell[axis] + 1) % n,
            (Dir::Minus, BoundaryCondition::Periodic) => (cell[axis] + n - 1) % n,
            (Dir::Plus, BoundaryCondition::HomogeneousNeumann) => {
                if cell[axis] + 1 == n {
                    return None;
                }
                cell[axis] + 1
            }
            (Dir::Minus, BoundaryCondition::HomogeneousNeumann) => {
                cell[axis].checked_sub(1)?
            }
        };
        Some(out)
    }

    /// Checked neighbor lookup.
    pub fn neighbor(&self, cell: [usize; 3], axis: usize, dir: Dir) -> Result<Option<[usize; 3]>> {
        if axis >= self.dim || !self.contains(cell) {
            return Err(Error::CellOutOfRange);
        }
        Ok(self.neighbor_wrapped(cell, axis, dir))
    }

    /// Cell containing `position`. Periodic coordinates are wrapped into
    /// `[0, L)` first; on Neumann axes a coordinate exactly equal to the
    /// extent maps to the last cell.
    pub fn cell_of_position(&self, position: &[f64; 3]) -> Result<[usize; 3]> {
        let mut cell = [0usize; 3];
        for axis in 0..self.dim {
            let mut x = position[axis];
            if !x.is_finite() {
                return Err(Error::PositionNotFinite);
            }
            let extent = self.extents[axis];
            match self.bc[axis] {
                BoundaryCondition::Periodic => {
                    x -= extent * math::floor(x / extent);
                    // A coordinate within one ulp below L can survive the wrap.
                    if x >= extent {
                        x = 0.0;
                    }
                }
                BoundaryCondition::HomogeneousNeumann => {
                    if !(0.0..=extent).contains(&x) {
                        return Err(Error::CellOutOfRange);
                    }
                }
            }
            let idx = math::floor(x / self.spacing[axis]) as usize;
            cell[axis] = idx.min(self.cells[axis] - 1);
        }
        Ok(cell)
    }

    pub fn cell_center(&self, cell: [usize; 3]) -> [f64; 3] {
        let mut out = [0.5; 3];
        for axis in 0..3 {
            out[axis] = (cell[axis] as f64 + 0.5) * self.spacing[axis];
        }
        out
    }

    pub fn cell_indices(&self) -> impl Iterator<Item = [usize; 3]> + '_ {
        (0..self.cell_count()).map(move |l| self.from_linear(l))
    }

    /// Uniform position inside `cell`, drawn from `stream` at `ordinal`.
    ///
    /// Uses the three uniforms at counters `3*ordinal .. 3*ordinal + 2`. The
    /// result is guaranteed to map back to `cell`; in the (ulp-rare) case
    /// where rounding would push a coordinate onto the upper face, the cell
    /// center is returned instead so per-cell bookkeeping stays exact.
    pub fn sample_position_in_cell(
        &self,
        cell: [usize; 3],
        stream: &crate::rng::Stream,
        ordinal: u64,
    ) -> [f64; 3] {
        let mut pos = [0.5, 0.5, 0.5];
        for axis in 0..self.dim {
            let u = stream.uniform(3 * ordinal + axis as u64);
            let spacing = self.spacing[axis];
            let x = (cell[axis] as f64 + u) * spacing;
            pos[axis] = if x >= (cell[axis] as f64 + 1.0) * spacing {
                (cell[axis] as f64 + 0.5) * spacing
            } else {
                x
            };
        }
        match self.cell_of_position(&pos) {
            Ok(landed) if landed == cell => pos,
            _ => self.cell_center(cell),
        }
    }
}
