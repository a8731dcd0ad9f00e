//! Initial-condition construction: per-cell particle counts from the
//! scenario geometry, the matching density field, and (for particle-bearing
//! methods) exact-count uniform particle placement per cell.

use anyhow::{bail, Result};
use dkh_core::grid::GridSpec;
use dkh_core::particle::{Particle, ParticleSet};
use dkh_core::rng::{SimRng, StreamKind};
use dkh_core::ScalarField;

use crate::config::Scenario;

/// Initial state of one realization.
pub struct InitialState {
    pub field: ScalarField,
    /// Present when the scenario's per-cell counts are integers (which
    /// particle-bearing methods require).
    pub particles: Option<ParticleSet>,
}

/// Per-cell particle counts prescribed by the scenario geometry, evaluated at
/// cell centers.
pub fn counts_per_cell(scenario: &Scenario, grid: &GridSpec) -> Vec<f64> {
    let extents = grid.extents();
    let center = [extents[0] / 2.0, extents[1] / 2.0, extents[2] / 2.0];
    grid.cell_indices()
        .map(|cell| {
            let x = grid.cell_center(cell);
            match scenario {
                Scenario::Uniform { particles_per_cell } => *particles_per_cell,
                Scenario::Void1d { density, lo, hi } => {
                    if (*lo..=*hi).contains(&x[0]) {
                        0.0
                    } else {
                        density * grid.cell_volume()
                    }
                }
                Scenario::Ellipses2d {
                    inner_radii,
                    outer_radii,
                    inner_count,
                    ring_count,
                    background_count,
                } => {
                    let e = |r: &[f64; 2]| {
                        let dx = (x[0] - center[0]) / r[0];
                        let dy = (x[1] - center[1]) / r[1];
                        dx * dx + dy * dy <= 1.0
                    };
                    if inner_radii.iter().all(|r| *r > 0.0) && e(inner_radii) {
                        *inner_count
                    } else if outer_radii.iter().all(|r| *r > 0.0) && e(outer_radii) {
                        *ring_count
                    } else {
                        *background_count
                    }
                }
                Scenario::Spheres3d {
                    inner_radius,
                    outer_radius,
                    inner_count,
                    ring_count,
                    background_count,
                } => {
                    let r2: f64 = (0..3).map(|a| (x[a] - center[a]) * (x[a] - center[a])).sum();
                    let r = r2.sqrt();
                    if *inner_radius > 0.0 && r <= *inner_radius {
                        *inner_count
                    } else if *outer_radius > 0.0 && r <= *outer_radius {
                        *ring_count
                    } else {
                        *background_count
                    }
                }
            }
        })
        .collect()
}

/// Build the initial field and, when the counts are integral, the particle
/// realization (exact counts per cell, positions uniform in the cell, drawn
/// from streams keyed by the cell so construction order is irrelevant).
pub fn build(
    scenario: &Scenario,
    grid: &GridSpec,
    rng: &SimRng,
    need_particles: bool,
) -> Result<InitialState> {
    let targets = counts_per_cell(scenario, grid);
    let mut counts = Vec::with_capacity(targets.len());
    let mut integral = true;
    for t in &targets {
        let rounded = t.round();
        if (t - rounded).abs() > 1e-6 {
            integral = false;
            break;
        }
        counts.push(rounded as u64);
    }

    if need_particles && !integral {
        bail!(
            "scenario `{}` prescribes a non-integer particle count per cell; \
             particle-bearing methods need integer counts",
            scenario.name()
        );
    }

    let inv_vc = 1.0 / grid.cell_volume();
    let field = if integral {
        // Same expression as particle binning, so the field and a binned
        // particle realization agree bitwise.
        ScalarField::from_values(*grid, counts.iter().map(|c| *c as f64 * inv_vc).collect())
    } else {
        ScalarField::from_values(*grid, targets.iter().map(|t| t * inv_vc).collect())
    }
    .expect("scenario counts are finite");

    let particles = if need_particles {
        let mut list = Vec::new();
        let mut id = 0u64;
        for (linear, count) in counts.iter().enumerate() {
            let cell = grid.from_linear(linear);
            let stream = rng.stream(StreamKind::InitPosition, &[linear as u64]);
            for ordinal in 0..*count {
                list.push(Particle {
                    id,
                    position: grid.sample_position_in_cell(cell, &stream, ordinal),
                });
                id += 1;
            }
        }
        Some(ParticleSet::with_particles(*grid, list, id).expect("positions lie in their cells"))
    } else {
        None
    };

    Ok(InitialState { field, particles })
}
