//! Random walk of point particles, binning to fields, and edge-crossing
//! accounting.
//!
//! Each particle's displacement at step `n` is a pure function of
//! `(seed, n, id)`: reordering the particle array or advancing particles in
//! parallel cannot change a trajectory, and a particle replicated in two grid
//! patches draws identical increments on both.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::math;
use crate::grid::{BoundaryCondition, GridSpec};
use crate::region::ParticleRegion;
use crate::rng::{SimRng, StreamKind};

/// Ids with this bit set denote ghost particles sampled into boundary cells;
/// they live for a single step unless they enter the particle region, at
/// which point they receive a fresh owned id.
pub const GHOST_ID_BIT: u64 = 1 << 63;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Particle {
    pub id: u64,
    pub position: [f64; 3],
}

/// A collection of particles tied to a grid.
///
/// `next_id` is the smallest owned id never handed out; it travels with the
/// set so that sampling during regridding can mint fresh ids without
/// colliding with live ones.
#[derive(Clone, Debug)]
pub struct ParticleSet {
    grid: GridSpec,
    particles: Vec<Particle>,
    next_id: u64,
}

impl ParticleSet {
    pub fn new(grid: GridSpec) -> Self {
        ParticleSet {
            grid,
            particles: Vec::new(),
            next_id: 0,
        }
    }

    pub fn with_particles(grid: GridSpec, particles: Vec<Particle>, next_id: u64) -> Result<Self> {
        for p in &particles {
            if p.position.iter().any(|x| !x.is_finite()) {
                return Err(Error::PositionNotFinite);
            }
            grid.cell_of_position(&p.position)?;
            if p.id & GHOST_ID_BIT == 0 && p.id >= next_id {
                return Err(Error::ParticleIdMismatch);
            }
        }
        Ok(ParticleSet {
            grid,
            particles,
            next_id,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn particles(&self) -> &[Particle] {
        &self.particles
    }

    pub fn next_id(&self) -> u64 {
        self.next_id
    }

    pub(crate) fn push(&mut self, p: Particle) {
        self.particles.push(p);
    }

    /// Mint the next owned id.
    pub(crate) fn allocate_id(&mut self) -> u64 {
        let id = self.next_id;
        assert!(id & GHOST_ID_BIT == 0, "owned id space exhausted");
        self.next_id += 1;
        id
    }
}

/// Advance every particle by one random walk step of variance `dt` per
/// coordinate.
///
/// Each component increment is clamped to one cell spacing, so a particle
/// moves at most one cell per axis per step. Periodic axes wrap the position
/// back into the domain; Neumann axes reflect at the physical boundary.
pub fn random_walk_step(set: &ParticleSet, dt: f64, rng: &SimRng, step: u64) -> Result<ParticleSet> {
    if !(dt > 0.0) {
        return Err(Error::NonPositiveTimeStep);
    }
    let grid = set.grid;
    let sigma = math::sqrt(dt);
    let mut particles = Vec::with_capacity(set.len());
    for p in set.particles() {
        let stream = rng.stream(StreamKind::Walk, &[step, p.id]);
        let mut position = p.position;
        for axis in 0..grid.dim() {
            let spacing = grid.spacing()[axis];
            let extent = grid.extents()[axis];
            let mut delta = sigma * stream.normal(axis as u64);
            delta = delta.clamp(-spacing, spacing);
            let mut x = position[axis] + delta;
            match grid.bc()[axis] {
                BoundaryCondition::Periodic => {
                    // |delta| <= spacing <= extent, so one correction suffices.
                    if x < 0.0 {
                        x += extent;
                    } else if x >= extent {
                        x -= extent;
                    }
                }
                BoundaryCondition::HomogeneousNeumann => {
                    if x < 0.0 {
                        x = -x;
                    } else if x > extent {
                        x = 2.0 * extent - x;
                    }
                }
            }
            position[axis] = x;
        }
        particles.push(Particle {
            id: p.id,
            position,
        });
    }
    Ok(ParticleSet {
        grid,
        particles,
        next_id: set.next_id,
    })
}

/// Number density from particle counts: value in a cell is
/// `(particles in the cell) / Vc`.
pub fn bin_counts(set: &ParticleSet) -> ScalarField {
    let grid = set.grid;
    let mut counts = alloc::vec![0u64; grid.cell_count()];
    for p in set.particles() {
        let cell = grid
            .cell_of_position(&p.position)
            .expect("particle positions are finite and in-domain");
        counts[grid.linear(cell)] += 1;
    }
    let inv_vc = 1.0 / grid.cell_volume();
    let values = counts.iter().map(|c| *c as f64 * inv_vc).collect();
    ScalarField::from_values(grid, values).expect("counts are finite")
}

/// Net signed particle transfers between cell pairs during one step.
///
/// Only one-way move counts are stored; the net transfer for a directed pair
/// is `moves(a→b) - moves(b→a)`, which makes the antisymmetry
/// `ΔN(a→b) = -ΔN(b→a)` hold by construction.
#[derive(Clone, Debug, Default)]
pub struct CrossingRecord {
    moves: BTreeMap<(usize, usize), u64>,
}

impl CrossingRecord {
    pub fn is_empty(&self) -> bool {
        self.moves.is_empty()
    }

    /// Net number of particles transferred from `from` to `to` (linear cell
    /// indices).
    pub fn net(&self, from: usize, to: usize) -> i64 {
        let forward = self.moves.get(&(from, to)).copied().unwrap_or(0) as i64;
        let backward = self.moves.get(&(to, from)).copied().unwrap_or(0) as i64;
        forward - backward
    }

    /// One-way move counts, keyed by (from, to) linear cell indices.
    pub fn moves(&self) -> impl Iterator<Item = ((usize, usize), u64)> + '_ {
        self.moves.iter().map(|(k, v)| (*k, *v))
    }
}

/// Record the cell transfer of every particle whose start cell lies in the
/// region or its one-cell halo and whose end cell differs.
///
/// `before` and `after` must be snapshots of the same particles (same ids, in
/// order), taken before any end-of-step discard.
pub fn record_crossings(
    before: &ParticleSet,
    after: &ParticleSet,
    region: &ParticleRegion,
) -> Result<CrossingRecord> {
    if before.len() != after.len() {
        return Err(Error::ParticleIdMismatch);
    }
    let grid = before.grid;
    let mut record = CrossingRecord::default();
    for (b, a) in before.particles().iter().zip(after.particles()) {
        if b.id != a.id {
            return Err(Error::ParticleIdMismatch);
        }
        let from = grid.linear(grid.cell_of_position(&b.position)?);
        let to = grid.linear(grid.cell_of_position(&a.position)?);
        if from == to {
            continue;
        }
        if region.contains_linear(from) || region.halo_contains_linear(from) {
            *record.moves.entry((from, to)).or_insert(0) += 1;
        }
    }
    Ok(record)
}
