//! Streaming ensemble statistics: per-cell central moments through order four
//! and discrete-binned probability histograms.
//!
//! Moment updates use the numerically stable one-pass recurrences, and two
//! accumulators built from disjoint sample shards merge into the same result
//! as a single pass, so ensembles can be reduced in any grouping. All
//! reported moments are population (biased) moments; kurtosis is non-excess,
//! so a Gaussian reports 3.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::math;
use crate::grid::GridSpec;

/// Variances below this absolute floor make skewness/kurtosis meaningless.
pub const VARIANCE_FLOOR: f64 = 1e-14;

/// One-stream moment accumulator (count, mean, and central power sums).
#[derive(Clone, Copy, Debug, Default)]
pub struct Moments {
    n: u64,
    mean: f64,
    m2: f64,
    m3: f64,
    m4: f64,
}

impl Moments {
    pub const fn new() -> Self {
        Moments {
            n: 0,
            mean: 0.0,
            m2: 0.0,
            m3: 0.0,
            m4: 0.0,
        }
    }

    pub fn push(&mut self, x: f64) {
        let n0 = self.n as f64;
        self.n += 1;
        let n = self.n as f64;
        let delta = x - self.mean;
        let delta_n = delta / n;
        let delta_n2 = delta_n * delta_n;
        let term = delta * delta_n * n0;
        self.m4 += term * delta_n2 * (n * n - 3.0 * n + 3.0) + 6.0 * delta_n2 * self.m2
            - 4.0 * delta_n * self.m3;
        self.m3 += term * delta_n * (n - 2.0) - 3.0 * delta_n * self.m2;
        self.m2 += term;
        self.mean += delta_n;
    }

    pub fn merge(&self, other: &Moments) -> Moments {
        if self.n == 0 {
            return *other;
        }
        if other.n == 0 {
            return *self;
        }
        let na = self.n as f64;
        let nb = other.n as f64;
        let n = na + nb;
        let delta = other.mean - self.mean;
        let delta2 = delta * delta;
        let mean = self.mean + delta * nb / n;
        let m2 = self.m2 + other.m2 + delta2 * na * nb / n;
        let m3 = self.m3
            + other.m3
            + delta2 * delta * na * nb * (na - nb) / (n * n)
            + 3.0 * delta * (na * other.m2 - nb * self.m2) / n;
        let m4 = self.m4
            + other.m4
            + delta2 * delta2 * na * nb * (na * na - na * nb + nb * nb) / (n * n * n)
            + 6.0 * delta2 * (na * na * other.m2 + nb * nb * self.m2) / (n * n)
            + 4.0 * delta * (na * other.m3 - nb * self.m3) / n;
        Moments {
            n: self.n + other.n,
            mean,
            m2,
            m3,
            m4,
        }
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Population variance `m2 / n`.
    pub fn variance(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.m2 / self.n as f64
        }
    }

    /// Population skewness `m3 / m2^(3/2)`; undefined below the variance floor.
    pub fn skewness(&self) -> Option<f64> {
        let var = self.variance();
        if self.n < 2 || var < VARIANCE_FLOOR {
            return None;
        }
        Some((self.m3 / self.n as f64) / (var * math::sqrt(var)))
    }

    /// Population (non-excess) kurtosis `m4 / m2²`; 3 for a Gaussian.
    pub fn kurtosis(&self) -> Option<f64> {
        let var = self.variance();
        if self.n < 2 || var < VARIANCE_FLOOR {
            return None;
        }
        Some((self.m4 / self.n as f64) / (var * var))
    }
}

/// Finalized per-cell statistics.
#[derive(Clone, Copy, Debug)]
pub struct CellMoments {
    pub count: u64,
    pub mean: f64,
    pub variance: f64,
    pub skewness: Option<f64>,
    pub kurtosis: Option<f64>,
}

/// Per-cell moment accumulator over an ensemble of fields.
#[derive(Clone, Debug)]
pub struct MomentAccumulator {
    grid: GridSpec,
    cells: Vec<Moments>,
}

impl MomentAccumulator {
    pub fn new(grid: GridSpec) -> Self {
        MomentAccumulator {
            cells: alloc::vec![Moments::new(); grid.cell_count()],
            grid,
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn accumulate(&mut self, field: &ScalarField) -> Result<()> {
        if field.grid() != &self.grid {
            return Err(Error::ShapeMismatch);
        }
        for (acc, value) in self.cells.iter_mut().zip(field.values()) {
            acc.push(*value);
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &MomentAccumulator) -> Result<()> {
        if other.grid != self.grid {
            return Err(Error::ShapeMismatch);
        }
        for (acc, theirs) in self.cells.iter_mut().zip(&other.cells) {
            *acc = acc.merge(theirs);
        }
        Ok(())
    }

    pub fn count(&self) -> u64 {
        self.cells.first().map_or(0, |m| m.count())
    }

    pub fn cell(&self, linear: usize) -> &Moments {
        &self.cells[linear]
    }

    /// Per-cell summaries; requires at least two samples.
    pub fn finalize(&self) -> Result<Vec<CellMoments>> {
        if self.count() < 2 {
            return Err(Error::InsufficientSamples);
        }
        Ok(self
            .cells
            .iter()
            .map(|m| CellMoments {
                count: m.count(),
                mean: m.mean(),
                variance: m.variance(),
                skewness: m.skewness(),
                kurtosis: m.kurtosis(),
            })
            .collect())
    }
}

/// Histogram over particle-width bins `[(k-1/2)/Vc, (k+1/2)/Vc)`: pure
/// particle densities land exactly on bin centers `k/Vc`, SPDE densities bin
/// into the nearest particle count, and negative samples fall into bins with
/// negative `k` (clamped into underflow below `k_min`).
#[derive(Clone, Debug)]
pub struct Histogram {
    cell_volume: f64,
    k_min: i64,
    k_max: i64,
    counts: Vec<u64>,
    underflow: u64,
    overflow: u64,
}

impl Histogram {
    pub fn new(cell_volume: f64, k_min: i64, k_max: i64) -> Result<Self> {
        if !(cell_volume > 0.0 && cell_volume.is_finite()) {
            return Err(Error::InvalidGrid("cell volume must be positive"));
        }
        if k_min > k_max {
            return Err(Error::InvalidGrid("histogram range is empty"));
        }
        Ok(Histogram {
            cell_volume,
            k_min,
            k_max,
            counts: alloc::vec![0; (k_max - k_min + 1) as usize],
            underflow: 0,
            overflow: 0,
        })
    }

    pub fn record(&mut self, q: f64) {
        let k = math::floor(q * self.cell_volume + 0.5);
        if k < self.k_min as f64 {
            self.underflow += 1;
        } else if k > self.k_max as f64 {
            self.overflow += 1;
        } else {
            self.counts[(k as i64 - self.k_min) as usize] += 1;
        }
    }

    pub fn record_field(&mut self, field: &ScalarField) {
        for v in field.values() {
            self.record(*v);
        }
    }

    pub fn merge(&mut self, other: &Histogram) -> Result<()> {
        if self.cell_volume != other.cell_volume
            || self.k_min != other.k_min
            || self.k_max != other.k_max
        {
            return Err(Error::ShapeMismatch);
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.underflow += other.underflow;
        self.overflow += other.overflow;
        Ok(())
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.underflow + self.overflow
    }

    pub fn underflow(&self) -> u64 {
        self.underflow
    }

    pub fn overflow(&self) -> u64 {
        self.overflow
    }

    pub fn count(&self, k: i64) -> u64 {
        if k < self.k_min || k > self.k_max {
            0
        } else {
            self.counts[(k - self.k_min) as usize]
        }
    }

    pub fn bin_center(&self, k: i64) -> f64 {
        k as f64 / self.cell_volume
    }

    /// `(k, bin center, probability)` rows normalized by the total sample
    /// count (under/overflow included in the normalization).
    pub fn probabilities(&self) -> impl Iterator<Item = (i64, f64, f64)> + '_ {
        let total = self.total().max(1) as f64;
        (self.k_min..=self.k_max).map(move |k| {
            (k, self.bin_center(k), self.count(k) as f64 / total)
        })
    }
}
