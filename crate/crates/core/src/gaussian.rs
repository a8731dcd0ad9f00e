//! Linearized Gaussian approximation: a deterministic hydrodynamic mean field
//! advanced by the explicit heat update, plus a fluctuating field driven by
//! stochastic fluxes whose amplitude is evaluated on the mean field only.
//! Because the noise amplitude never depends on the fluctuating field, that
//! field is an exactly Gaussian process (and can go negative with
//! Gaussian-tail probability).

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::fv::{self, averaging, NoiseSource, ZeroNoise};
use crate::math;
use crate::grid::Dir;

/// Explicit heat update of the mean field; identical stencil to
/// [`fv::em_step`] with zero noise.
pub fn mean_step(mean: &ScalarField, dt: f64) -> Result<ScalarField> {
    fv::em_step(mean, &ZeroNoise, dt)
}

/// One step of the fluctuating field `q_g`: the deterministic stencil acts on
/// `q_g`, while every stochastic-flux amplitude comes from the mean field at
/// the same time level.
pub fn gaussian_step<N: NoiseSource>(
    fluct: &ScalarField,
    mean: &ScalarField,
    noise: &N,
    dt: f64,
) -> Result<ScalarField> {
    if !(dt > 0.0) {
        return Err(Error::NonPositiveTimeStep);
    }
    if fluct.grid() != mean.grid() {
        return Err(Error::ShapeMismatch);
    }
    let grid = *fluct.grid();
    let mut out = fluct.clone();
    for axis in 0..grid.dim() {
        let inv_spacing = 1.0 / grid.spacing()[axis];
        for linear in 0..grid.cell_count() {
            let cell = grid.from_linear(linear);
            let Some(upper) = grid.neighbor_wrapped(cell, axis, Dir::Plus) else {
                continue;
            };
            let det = (fluct.get(upper) - fluct.get(cell)) / (2.0 * grid.spacing()[axis]);
            let stoch = averaging(mean.get(cell), mean.get(upper)) * noise.face_z(axis, cell)
                / math::sqrt(dt * grid.cell_volume());
            let transfer = dt * (det + stoch) * inv_spacing;
            out.values_mut()[linear] += transfer;
            out.values_mut()[grid.linear(upper)] -= transfer;
        }
    }
    Ok(out)
}

/// Mean and fluctuating fields advanced in lockstep so they always refer to
/// the same time level.
#[derive(Clone, Debug)]
pub struct GaussianState {
    pub mean: ScalarField,
    pub fluct: ScalarField,
}

impl GaussianState {
    /// Both fields start from the common initial condition.
    pub fn new(initial: &ScalarField) -> Self {
        GaussianState {
            mean: initial.clone(),
            fluct: initial.clone(),
        }
    }

    pub fn step<N: NoiseSource>(&self, noise: &N, dt: f64) -> Result<GaussianState> {
        let fluct = gaussian_step(&self.fluct, &self.mean, noise, dt)?;
        let mean = mean_step(&self.mean, dt)?;
        Ok(GaussianState { mean, fluct })
    }
}
