//! Finite-volume Euler-Maruyama step for the Dean-Kawasaki equation in
//! number-density form.
//!
//! The update is written in flux form: every face carries a total flux
//! `F = F̄ + F̃` with deterministic part `F̄ = (q_hi - q_lo) / (2Δ)` and
//! stochastic part `F̃ = A(q_lo, q_hi) · Z / sqrt(Δt · Vc)`, where
//! `A(q1, q2) = (sqrt(max(q1,0)) + sqrt(max(q2,0))) / 2` and `Z` is a
//! standard normal drawn once per face per step. A cell is updated with the
//! signed sum of its face fluxes, so the discrete mass telescopes exactly on
//! periodic meshes.
//!
//! Negative densities are permitted and only the noise amplitude clips them
//! (through the `max(q, 0)` inside the square root); callers interested in
//! positivity count negative cells from the result.

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::math;
use crate::grid::{Dir, GridSpec};
use crate::rng::{SimRng, Stream, StreamKind};

/// Source of the per-face standard normals `Z`.
pub trait NoiseSource {
    /// The draw for the face on the `+axis` side of `lower_cell`.
    fn face_z(&self, axis: usize, lower_cell: [usize; 3]) -> f64;
}

/// Keyed face noise: the draw for a face depends only on
/// `(seed, step, axis, face)`, so any consumer regenerates identical values
/// regardless of evaluation order.
pub struct FaceNoise {
    stream: Stream,
    cells: [usize; 3],
}

impl FaceNoise {
    pub fn new(rng: &SimRng, step: u64, grid: &GridSpec) -> Self {
        FaceNoise {
            stream: rng.stream(StreamKind::FaceNoise, &[step]),
            cells: grid.cells(),
        }
    }
}

impl NoiseSource for FaceNoise {
    #[inline]
    fn face_z(&self, axis: usize, lower_cell: [usize; 3]) -> f64 {
        let linear = (lower_cell[2] * self.cells[1] + lower_cell[1]) * self.cells[0]
            + lower_cell[0];
        let per_axis = self.cells[0] * self.cells[1] * self.cells[2];
        self.stream.normal((axis * per_axis + linear) as u64)
    }
}

/// Noiseless source; turns `em_step` into the plain explicit heat update.
pub struct ZeroNoise;

impl NoiseSource for ZeroNoise {
    #[inline]
    fn face_z(&self, _axis: usize, _lower_cell: [usize; 3]) -> f64 {
        0.0
    }
}

/// Face amplitude of the stochastic flux.
#[inline]
pub fn averaging(q1: f64, q2: f64) -> f64 {
    (math::sqrt(q1.max(0.0)) + math::sqrt(q2.max(0.0))) / 2.0
}

/// Deterministic flux at the face on the `+axis` side of `lower_cell`;
/// zero at a physical boundary.
pub fn deterministic_flux(field: &ScalarField, axis: usize, lower_cell: [usize; 3]) -> f64 {
    let grid = field.grid();
    match grid.neighbor_wrapped(lower_cell, axis, Dir::Plus) {
        Some(upper) => (field.get(upper) - field.get(lower_cell)) / (2.0 * grid.spacing()[axis]),
        None => 0.0,
    }
}

/// Stochastic flux at the face on the `+axis` side of `lower_cell`;
/// zero at a physical boundary.
pub fn stochastic_flux(
    field: &ScalarField,
    axis: usize,
    lower_cell: [usize; 3],
    z: f64,
    dt: f64,
) -> Result<f64> {
    if !(dt > 0.0) {
        return Err(Error::NonPositiveTimeStep);
    }
    let grid = field.grid();
    Ok(match grid.neighbor_wrapped(lower_cell, axis, Dir::Plus) {
        Some(upper) => {
            averaging(field.get(lower_cell), field.get(upper)) * z
                / math::sqrt(dt * grid.cell_volume())
        }
        None => 0.0,
    })
}

/// Total flux `F̄ + F̃` at the face on the `+axis` side of `lower_cell`.
///
/// This is the single definition of a face flux: the time step consumes it
/// and the hybrid records it, so both always see bit-identical values.
#[inline]
pub fn total_face_flux<N: NoiseSource>(
    field: &ScalarField,
    axis: usize,
    lower_cell: [usize; 3],
    noise: &N,
    dt: f64,
) -> f64 {
    let grid = field.grid();
    let Some(upper) = grid.neighbor_wrapped(lower_cell, axis, Dir::Plus) else {
        return 0.0;
    };
    let q_lo = field.get(lower_cell);
    let q_hi = field.get(upper);
    let det = (q_hi - q_lo) / (2.0 * grid.spacing()[axis]);
    let stoch =
        averaging(q_lo, q_hi) * noise.face_z(axis, lower_cell) / math::sqrt(dt * grid.cell_volume());
    det + stoch
}

/// Largest time step for which the deterministic part of the update is
/// non-oscillatory: `1 / Σ_axes 1/Δ²`.
pub fn stability_max_dt(grid: &GridSpec) -> f64 {
    let mut inv = 0.0;
    for axis in 0..grid.dim() {
        inv += 1.0 / (grid.spacing()[axis] * grid.spacing()[axis]);
    }
    1.0 / inv
}

/// One Euler-Maruyama step of the number density.
pub fn em_step<N: NoiseSource>(field: &ScalarField, noise: &N, dt: f64) -> Result<ScalarField> {
    if !(dt > 0.0) {
        return Err(Error::NonPositiveTimeStep);
    }
    let grid = *field.grid();
    if dt > stability_max_dt(&grid) {
        log::warn!(
            "time step {dt} exceeds the deterministic stability bound {}",
            stability_max_dt(&grid)
        );
    }
    let mut out = field.clone();
    for axis in 0..grid.dim() {
        let inv_spacing = 1.0 / grid.spacing()[axis];
        for linear in 0..grid.cell_count() {
            let cell = grid.from_linear(linear);
            let Some(upper) = grid.neighbor_wrapped(cell, axis, Dir::Plus) else {
                continue;
            };
            let transfer = dt * total_face_flux(field, axis, cell, noise, dt) * inv_spacing;
            out.values_mut()[linear] += transfer;
            out.values_mut()[grid.linear(upper)] -= transfer;
        }
    }
    Ok(out)
}
