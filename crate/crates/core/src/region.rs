//! Axis-aligned index-space boxes and the particle region they make up.
//!
//! The particle region is a union of disjoint boxes; its one-cell halo (all
//! cells outside the region with a region cell in their 3^d neighborhood,
//! boundary conditions respected) is where the hybrid samples ghost particles
//! and applies flux corrections.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::grid::{BoundaryCondition, GridSpec};

/// Inclusive box of cell indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct IndexBox {
    pub lo: [usize; 3],
    pub hi: [usize; 3],
}

impl IndexBox {
    pub fn new(lo: [usize; 3], hi: [usize; 3]) -> Self {
        debug_assert!(lo.iter().zip(&hi).all(|(l, h)| l <= h));
        IndexBox { lo, hi }
    }

    pub fn contains(&self, cell: [usize; 3]) -> bool {
        (0..3).all(|a| self.lo[a] <= cell[a] && cell[a] <= self.hi[a])
    }

    pub fn cell_count(&self) -> usize {
        (0..3).map(|a| self.hi[a] - self.lo[a] + 1).product()
    }

    pub fn intersects(&self, other: &IndexBox) -> bool {
        (0..3).all(|a| self.lo[a] <= other.hi[a] && other.lo[a] <= self.hi[a])
    }

    pub fn cells(&self) -> impl Iterator<Item = [usize; 3]> + '_ {
        let lo = self.lo;
        let hi = self.hi;
        (lo[2]..=hi[2]).flat_map(move |k| {
            (lo[1]..=hi[1]).flat_map(move |j| (lo[0]..=hi[0]).map(move |i| [i, j, k]))
        })
    }
}

/// Union of disjoint boxes where the particle description is active.
#[derive(Clone, Debug)]
pub struct ParticleRegion {
    grid: GridSpec,
    boxes: Vec<IndexBox>,
    mask: Vec<bool>,
    halo_mask: Vec<bool>,
    cell_list: Vec<usize>,
    halo_list: Vec<usize>,
}

impl ParticleRegion {
    pub fn new(grid: GridSpec, boxes: Vec<IndexBox>) -> Result<Self> {
        for b in &boxes {
            if !grid.contains(b.lo) || !grid.contains(b.hi) {
                return Err(Error::CellOutOfRange);
            }
        }
        for (i, a) in boxes.iter().enumerate() {
            for b in &boxes[i + 1..] {
                if a.intersects(b) {
                    return Err(Error::InvalidGrid("particle region boxes overlap"));
                }
            }
        }

        let mut mask = alloc::vec![false; grid.cell_count()];
        for b in &boxes {
            for cell in b.cells() {
                mask[grid.linear(cell)] = true;
            }
        }

        let halo_mask = chebyshev_shell(&grid, &mask);
        let cell_list = (0..mask.len()).filter(|l| mask[*l]).collect();
        let halo_list = (0..halo_mask.len()).filter(|l| halo_mask[*l]).collect();
        Ok(ParticleRegion {
            grid,
            boxes,
            mask,
            halo_mask,
            cell_list,
            halo_list,
        })
    }

    pub fn empty(grid: GridSpec) -> Self {
        Self::new(grid, Vec::new()).expect("empty region is always valid")
    }

    pub fn full(grid: GridSpec) -> Self {
        let cells = grid.cells();
        Self::new(
            grid,
            alloc::vec![IndexBox::new([0, 0, 0], [cells[0] - 1, cells[1] - 1, cells[2] - 1])],
        )
        .expect("full region is always valid")
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn boxes(&self) -> &[IndexBox] {
        &self.boxes
    }

    pub fn is_empty(&self) -> bool {
        self.cell_list.is_empty()
    }

    pub fn cell_count(&self) -> usize {
        self.cell_list.len()
    }

    pub fn contains(&self, cell: [usize; 3]) -> bool {
        self.mask[self.grid.linear(cell)]
    }

    #[inline]
    pub fn contains_linear(&self, linear: usize) -> bool {
        self.mask[linear]
    }

    pub fn halo_contains(&self, cell: [usize; 3]) -> bool {
        self.halo_mask[self.grid.linear(cell)]
    }

    #[inline]
    pub fn halo_contains_linear(&self, linear: usize) -> bool {
        self.halo_mask[linear]
    }

    /// Region cells in ascending linear order.
    pub fn cells(&self) -> impl Iterator<Item = [usize; 3]> + '_ {
        self.cell_list.iter().map(|l| self.grid.from_linear(*l))
    }

    /// Halo cells in ascending linear order.
    pub fn halo_cells(&self) -> impl Iterator<Item = [usize; 3]> + '_ {
        self.halo_list.iter().map(|l| self.grid.from_linear(*l))
    }
}

/// Cells outside `mask` that have a masked cell within Chebyshev distance 1.
fn chebyshev_shell(grid: &GridSpec, mask: &[bool]) -> Vec<bool> {
    let mut shell = alloc::vec![false; mask.len()];
    for linear in 0..mask.len() {
        if mask[linear] {
            continue;
        }
        let cell = grid.from_linear(linear);
        if neighborhood_hits_mask(grid, mask, cell) {
            shell[linear] = true;
        }
    }
    shell
}

fn neighborhood_hits_mask(grid: &GridSpec, mask: &[bool], cell: [usize; 3]) -> bool {
    let dim = grid.dim();
    let offsets: [i64; 3] = [-1, 0, 1];
    for &dz in if dim > 2 { &offsets[..] } else { &offsets[1..2] } {
        for &dy in if dim > 1 { &offsets[..] } else { &offsets[1..2] } {
            for &dx in &offsets {
                if dx == 0 && dy == 0 && dz == 0 {
                    continue;
                }
                let Some(n) = offset_cell(grid, cell, [dx, dy, dz]) else {
                    continue;
                };
                if mask[grid.linear(n)] {
                    return true;
                }
            }
        }
    }
    false
}

/// Apply a per-axis offset with wrap/clip per boundary condition.
pub(crate) fn offset_cell(
    grid: &GridSpec,
    cell: [usize; 3],
    offset: [i64; 3],
) -> Option<[usize; 3]> {
    let mut out = cell;
    for axis in 0..3 {
        if offset[axis] == 0 {
            continue;
        }
        let n = grid.cells()[axis] as i64;
        let raw = cell[axis] as i64 + offset[axis];
        out[axis] = match grid.bc()[axis] {
            BoundaryCondition::Periodic => raw.rem_euclid(n) as usize,
            BoundaryCondition::HomogeneousNeumann => {
                if raw < 0 || raw >= n {
                    return None;
                }
                raw as usize
            }
        };
    }
    Some(out)
}
