//! The hybrid time step: advance the SPDE over the whole domain, advance the
//! particle region with SPDE-fed boundary cells, then synchronize.
//!
//! One step is a three-stage process. First the finite-volume update runs
//! everywhere, and the face fluxes it exchanged with the particle region are
//! recorded as particle-equivalents. Second, the halo cells around the region
//! are populated with ghost particles sampled from the field, and all
//! particles (owned and ghost) take one random walk step while their cell
//! crossings are recorded. Third, the composite solution is assembled:
//! particle cells are overwritten with binned particle densities, and each
//! halo cell has the recorded SPDE exchange with the region backed out and
//! the actual particle crossings applied in its place.
//!
//! Ghost particles never contribute to the overwrite of particle-cell values;
//! they exist solely to generate inbound crossings. A ghost that ends the
//! step inside the region is adopted as an owned particle (with a fresh owned
//! id); everything else outside the region is discarded.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::fv::{self, FaceNoise};
use crate::math;
use crate::grid::Dir;
use crate::particle::{
    bin_counts, random_walk_step, record_crossings, CrossingRecord, Particle, ParticleSet,
    GHOST_ID_BIT,
};
use crate::region::ParticleRegion;
use crate::regrid::{self, RegridPolicy};
use crate::rng::{SimRng, StreamKind};

/// Composite solution: the field is defined over the whole domain and equals
/// the binned particle density on region cells.
#[derive(Clone, Debug)]
pub struct HybridState {
    pub field: ScalarField,
    pub region: ParticleRegion,
    pub particles: ParticleSet,
}

/// Per-face accounting of the exchange between the SPDE and the particle
/// region during one step, keyed by (region cell, halo cell) linear indices.
///
/// `spde` holds the particle-equivalents the finite-volume update moved into
/// each halo cell across a shared face; `crossings` holds the net particle
/// transfers from the particle update over the 3^d neighborhood. Cell pairs
/// sharing a face are a subset of pairs in the neighborhood, so every `spde`
/// key is also a valid `crossings` key.
#[derive(Clone, Debug, Default)]
pub struct FluxRegister {
    spde: BTreeMap<(usize, usize), f64>,
    crossings: BTreeMap<(usize, usize), i64>,
}

impl FluxRegister {
    /// Record the SPDE transfer (in particles, signed into the halo cell).
    pub fn record_spde(&mut self, region_cell: usize, halo_cell: usize, transfer: f64) {
        *self.spde.entry((region_cell, halo_cell)).or_insert(0.0) += transfer;
    }

    /// Absorb the region↔halo transfers of a crossing record. Crossings
    /// between two particle cells need no entry (binning handles them), and
    /// crossings wholly outside the region are not the hybrid's business.
    pub fn absorb_crossings(&mut self, record: &CrossingRecord, region: &ParticleRegion) {
        for ((from, to), count) in record.moves() {
            if region.contains_linear(from) && region.halo_contains_linear(to) {
                *self.crossings.entry((from, to)).or_insert(0) += count as i64;
            } else if region.halo_contains_linear(from) && region.contains_linear(to) {
                *self.crossings.entry((to, from)).or_insert(0) -= count as i64;
            }
        }
    }

    pub fn spde_transfers(&self) -> impl Iterator<Item = ((usize, usize), f64)> + '_ {
        self.spde.iter().map(|(k, v)| (*k, *v))
    }

    pub fn particle_transfers(&self) -> impl Iterator<Item = ((usize, usize), i64)> + '_ {
        self.crossings.iter().map(|(k, v)| (*k, *v))
    }
}

/// What a sampling pass did, for conservation bookkeeping.
#[derive(Clone, Copy, Debug, Default)]
pub struct SampleLog {
    /// Σ (particles placed − field target) over the sampled cells; the exact
    /// mass discrepancy introduced where sampled counts replace field values.
    pub rounding_delta: f64,
    /// Cells whose (slightly) negative field value was clipped to zero.
    pub clipped_cells: usize,
    /// Particles placed.
    pub placed: u64,
}

/// Diagnostics of one hybrid step.
#[derive(Clone, Copy, Debug, Default)]
pub struct StepLog {
    /// Ghost sampling bookkeeping. Ghost rounding does not perturb the
    /// composite mass (the synchronization accounts for every crossing), but
    /// it is logged so deviations can be attributed.
    pub ghost: SampleLog,
}

/// Which keyed streams a sampling pass draws from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SampleContext {
    /// Ghost particles in boundary cells; keyed by (step, cell) so a halo
    /// cell shared by two patches is sampled identically on both.
    Ghost,
    /// Filling cells that newly enter the particle region.
    Regrid,
}

impl SampleContext {
    fn kinds(self) -> (StreamKind, StreamKind) {
        match self {
            SampleContext::Ghost => (StreamKind::GhostCount, StreamKind::GhostPosition),
            SampleContext::Regrid => (StreamKind::RegridRound, StreamKind::RegridPosition),
        }
    }
}

/// Draw a particle realization consistent (in expectation) with the field on
/// the listed cells.
///
/// A cell with target count `l + α` (`l` integer, `α ∈ [0,1)`) receives `l`
/// particles plus one more with probability `α`; positions are uniform over
/// the cell. Tiny negative field values are clipped to zero. `place` is
/// called once per particle with `(cell, ordinal, position)`.
pub fn sample_particles_from_field<F>(
    field: &ScalarField,
    cells: &[[usize; 3]],
    context: SampleContext,
    rng: &SimRng,
    step: u64,
    mut place: F,
) -> SampleLog
where
    F: FnMut([usize; 3], u64, [f64; 3]),
{
    let grid = field.grid();
    let vc = grid.cell_volume();
    let (count_kind, position_kind) = context.kinds();
    let mut log = SampleLog::default();
    for &cell in cells {
        let raw_target = field.get(cell) * vc;
        let target = if raw_target < 0.0 {
            log.clipped_cells += 1;
            log::debug!("clipping negative sampling target {raw_target} in cell {cell:?}");
            0.0
        } else {
            raw_target
        };
        let linear = grid.linear(cell) as u64;
        let whole = math::floor(target);
        let fraction = target - whole;
        let mut count = whole as u64;
        if fraction > 0.0 {
            let beta = rng.stream(count_kind, &[step, linear]).uniform(0);
            if beta < fraction {
                count += 1;
            }
        }
        log.rounding_delta += count as f64 - raw_target;
        log.placed += count;
        let positions = rng.stream(position_kind, &[step, linear]);
        for ordinal in 0..count {
            place(cell, ordinal, grid.sample_position_in_cell(cell, &positions, ordinal));
        }
    }
    log
}

/// Populate the one-cell halo of the region with ghost particles sampled
/// from the field.
pub fn fill_boundary_cells(
    field: &ScalarField,
    region: &ParticleRegion,
    rng: &SimRng,
    step: u64,
) -> (Vec<Particle>, SampleLog) {
    let grid = field.grid();
    let halo: Vec<[usize; 3]> = region.halo_cells().collect();
    let mut ghosts = Vec::new();
    let log = sample_particles_from_field(
        field,
        &halo,
        SampleContext::Ghost,
        rng,
        step,
        |cell, ordinal, position| {
            let linear = grid.linear(cell) as u64;
            debug_assert!(linear < 1 << 39 && ordinal < 1 << 24);
            ghosts.push(Particle {
                id: GHOST_ID_BIT | (linear << 24) | ordinal,
                position,
            });
        },
    );
    (ghosts, log)
}

/// Scale a total face flux to the number of particles it transports across
/// the face during one step. The sign for a particular transfer direction is
/// applied by the caller.
#[inline]
pub fn scaled_face_flux(total_flux: f64, dt: f64, face_area: f64) -> f64 {
    dt * face_area * total_flux
}

/// Assemble the composite solution: particle cells take the binned density,
/// halo cells have the registered SPDE exchange replaced by the registered
/// particle crossings, every other cell keeps the SPDE update.
pub fn synchronize(
    qstar: &ScalarField,
    region: &ParticleRegion,
    binned: &ScalarField,
    register: &FluxRegister,
) -> Result<ScalarField> {
    if qstar.grid() != binned.grid() || qstar.grid() != region.grid() {
        return Err(Error::ShapeMismatch);
    }
    let grid = *qstar.grid();
    let inv_vc = 1.0 / grid.cell_volume();
    let mut out = qstar.clone();
    for cell in region.cells() {
        out.set(cell, binned.get(cell));
    }
    for ((region_cell, halo_cell), transfer) in register.spde_transfers() {
        if !region.contains_linear(region_cell) || !region.halo_contains_linear(halo_cell) {
            return Err(Error::RegionMismatch);
        }
        out.values_mut()[halo_cell] -= transfer * inv_vc;
    }
    for ((region_cell, halo_cell), net) in register.particle_transfers() {
        if !region.contains_linear(region_cell) || !region.halo_contains_linear(halo_cell) {
            return Err(Error::RegionMismatch);
        }
        out.values_mut()[halo_cell] += net as f64 * inv_vc;
    }
    Ok(out)
}

/// One hybrid step: SPDE everywhere, particles with SPDE-fed boundaries,
/// synchronization. The particle region itself is left unchanged; regridding
/// happens between steps.
pub fn advance_hybrid_step(
    state: &HybridState,
    dt: f64,
    rng: &SimRng,
    step: u64,
) -> Result<(HybridState, StepLog)> {
    let grid = *state.field.grid();
    let noise = FaceNoise::new(rng, step, &grid);

    // Stage 1: finite-volume update over the entire domain, recording the
    // particle-equivalents it exchanges with the region across shared faces.
    let qstar = fv::em_step(&state.field, &noise, dt)?;
    let mut register = FluxRegister::default();
    for halo in state.region.halo_cells() {
        for axis in 0..grid.dim() {
            for dir in [Dir::Minus, Dir::Plus] {
                let Some(neighbor) = grid.neighbor_wrapped(halo, axis, dir) else {
                    continue;
                };
                if !state.region.contains(neighbor) {
                    continue;
                }
                let lower = match dir {
                    Dir::Minus => neighbor,
                    Dir::Plus => halo,
                };
                let flux = fv::total_face_flux(&state.field, axis, lower, &noise, dt);
                let magnitude = scaled_face_flux(flux, dt, grid.face_area(axis));
                // A cell's lower face enters its update with a minus sign and
                // its upper face with a plus sign; the transfer into the halo
                // cell carries the same sign.
                let into_halo = match dir {
                    Dir::Minus => -magnitude,
                    Dir::Plus => magnitude,
                };
                register.record_spde(grid.linear(neighbor), grid.linear(halo), into_halo);
            }
        }
    }

    // Stage 2: ghosts, random walk, crossings.
    let (ghosts, ghost_log) = fill_boundary_cells(&state.field, &state.region, rng, step);
    let mut working = state.particles.clone();
    for ghost in ghosts {
        working.push(ghost);
    }
    let moved = random_walk_step(&working, dt, rng, step)?;
    let crossings = record_crossings(&working, &moved, &state.region)?;
    register.absorb_crossings(&crossings, &state.region);

    // Keep particles that ended inside the region; adopt ghosts among them
    // with fresh owned ids (in ghost-id order, which is (cell, ordinal)
    // order, so adoption is deterministic). Discard everything else.
    let mut survivors: Vec<Particle> = Vec::with_capacity(moved.len());
    let mut adopted: Vec<Particle> = Vec::new();
    for p in moved.particles() {
        let cell = grid.cell_of_position(&p.position)?;
        if state.region.contains(cell) {
            if p.id & GHOST_ID_BIT == 0 {
                survivors.push(*p);
            } else {
                adopted.push(*p);
            }
        }
    }
    adopted.sort_by_key(|p| p.id);
    let mut next_id = state.particles.next_id();
    for mut p in adopted {
        p.id = next_id;
        next_id += 1;
        survivors.push(p);
    }
    let particles = ParticleSet::with_particles(grid, survivors, next_id)?;

    // Stage 3: synchronization.
    let binned = bin_counts(&particles);
    let field = synchronize(&qstar, &state.region, &binned, &register)?;

    Ok((
        HybridState {
            field,
            region: state.region.clone(),
            particles,
        },
        StepLog { ghost: ghost_log },
    ))
}

/// Build the initial composite state: tag and cluster the field to place the
/// particle region, then fill it from the given particle description (cells
/// keep their exact particles) or, absent one, by conditional sampling from
/// the field.
pub fn initialize(
    field: &ScalarField,
    particles: Option<&ParticleSet>,
    policy: &RegridPolicy,
    rng: &SimRng,
) -> Result<(HybridState, SampleLog)> {
    let grid = *field.grid();
    let tags = regrid::tag_cells(field, policy);
    let boxes = regrid::cluster(&tags, policy.efficiency);
    let region = ParticleRegion::new(grid, boxes)?;

    let mut log = SampleLog::default();
    let set = match particles {
        Some(source) => {
            if source.grid() != &grid {
                return Err(Error::ShapeMismatch);
            }
            let mut kept = Vec::new();
            for p in source.particles() {
                if region.contains(grid.cell_of_position(&p.position)?) {
                    kept.push(*p);
                }
            }
            ParticleSet::with_particles(grid, kept, source.next_id())?
        }
        None => {
            let cells: Vec<[usize; 3]> = region.cells().collect();
            let mut set = ParticleSet::new(grid);
            log = sample_particles_from_field(
                field,
                &cells,
                SampleContext::Regrid,
                rng,
                0,
                |_cell, _ordinal, position| {
                    let id = set.allocate_id();
                    set.push(Particle { id, position });
                },
            );
            set
        }
    };

    let binned = bin_counts(&set);
    let mut composite = field.clone();
    for cell in region.cells() {
        composite.set(cell, binned.get(cell));
    }
    Ok((
        HybridState {
            field: composite,
            region,
            particles: set,
        },
        log,
    ))
}
