//! Cell-centered scalar fields holding the number density `q` (particles per
//! unit volume).

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::grid::GridSpec;

#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    grid: GridSpec,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: GridSpec) -> Self {
        ScalarField {
            values: vec![0.0; grid.cell_count()],
            grid,
        }
    }

    pub fn constant(grid: GridSpec, value: f64) -> Result<Self> {
        if !value.is_finite() {
            return Err(Error::ValueNotFinite);
        }
        Ok(ScalarField {
            values: vec![value; grid.cell_count()],
            grid,
        })
    }

    pub fn from_values(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.cell_count() {
            return Err(Error::ShapeMismatch);
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::ValueNotFinite);
        }
        Ok(ScalarField { grid, values })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    #[inline]
    pub fn get(&self, cell: [usize; 3]) -> f64 {
        self.values[self.grid.linear(cell)]
    }

    #[inline]
    pub fn set(&mut self, cell: [usize; 3], value: f64) {
        let l = self.grid.linear(cell);
        self.values[l] = value;
    }

    /// Total particle count represented by the field: `Σ q · Vc`.
    pub fn total_mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume()
    }

    pub fn negative_cell_count(&self) -> usize {
        self.values.iter().filter(|v| **v < 0.0).count()
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}
