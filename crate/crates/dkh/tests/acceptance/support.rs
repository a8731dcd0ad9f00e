//! Shared machinery for the acceptance suite: equilibrium ensemble runners,
//! the exact binomial oracle, replica statistics, and a member-resampling
//! bootstrap for shape-moment standard errors.

use dkh_core::fv::{self, FaceNoise};
use dkh_core::gaussian::GaussianState;
use dkh_core::grid::{BoundaryCondition, GridSpec};
use dkh_core::particle::{self, ParticleSet};
use dkh_core::rng::{SimRng, StreamKind};
use dkh_core::stats::Moments;
use dkh_core::ScalarField;
use rayon::prelude::*;

pub const CELLS_1D: usize = 100;

pub fn grid_1d() -> GridSpec {
    GridSpec::line(CELLS_1D, 1.0, BoundaryCondition::Periodic).unwrap()
}

/// Exact Binomial(n, p) per-cell count moments: the equilibrium law of
/// independent particles on a periodic mesh of equal cells.
pub struct BinomialOracle {
    #[allow(dead_code)]
    pub mean: f64,
    pub variance: f64,
    pub skewness: f64,
    pub kurtosis: f64,
}

impl BinomialOracle {
    pub fn new(n: u64, p: f64) -> Self {
        let n = n as f64;
        let var = n * p * (1.0 - p);
        BinomialOracle {
            mean: n * p,
            variance: var,
            skewness: (1.0 - 2.0 * p) / var.sqrt(),
            kurtosis: 3.0 + (1.0 - 6.0 * p * (1.0 - p)) / var,
        }
    }
}

/// Pooled (cells × snapshots) count statistics of one equilibrium replica.
#[derive(Clone, Copy, Debug)]
pub struct PooledStats {
    #[allow(dead_code)]
    pub mean: f64,
    pub variance: f64,
    pub skewness: f64,
    pub kurtosis: f64,
    /// Fraction of (cell, snapshot) samples with a negative value.
    pub negative_fraction: f64,
    pub samples: u64,
}

fn pooled_from(moments: &Moments, negatives: u64) -> PooledStats {
    PooledStats {
        mean: moments.mean(),
        variance: moments.variance(),
        skewness: moments.skewness().expect("pooled variance is positive"),
        kurtosis: moments.kurtosis().expect("pooled variance is positive"),
        negative_fraction: negatives as f64 / moments.count() as f64,
        samples: moments.count(),
    }
}

/// Scalar summary of replica-to-replica scatter.
pub struct ReplicaSummary {
    pub mean: f64,
    /// Standard error of the replica mean.
    pub se: f64,
}

pub fn summarize(values: &[f64]) -> ReplicaSummary {
    let r = values.len() as f64;
    let mean = values.iter().sum::<f64>() / r;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (r - 1.0);
    ReplicaSummary {
        mean,
        se: (var / r).sqrt(),
    }
}

/// Equilibrium run plan: equilibrate, then pool per-cell counts over
/// `snapshots` states spaced `sample_every` steps apart.
#[derive(Clone, Copy)]
pub struct EquilibriumPlan {
    pub dt: f64,
    pub equilibration_steps: u64,
    pub snapshots: u64,
    pub sample_every: u64,
}

impl EquilibriumPlan {
    /// Plan for the pure particle method. The per-cell count distribution is
    /// stationary under any time step (symmetric clamped increments keep the
    /// uniform position law invariant), so a large step is used to reach
    /// equilibrium quickly from the exact-count initial placement.
    pub fn particle(grid: &GridSpec) -> Self {
        let dx = grid.spacing()[0];
        EquilibriumPlan {
            dt: 4.0 * dx * dx,
            equilibration_steps: 10_000,
            snapshots: 200,
            sample_every: 4,
        }
    }

    /// Plan for the field methods at time step `dt`: equilibrate past the
    /// slowest mode's relaxation, then sample with decorrelating spacing.
    pub fn field(grid: &GridSpec, dt: f64, snapshots: u64) -> Self {
        let length = grid.extents()[0];
        // Slowest periodic mode k = 2π/L relaxes at λ = k²/2.
        let slowest_rate = 2.0 * core::f64::consts::PI.powi(2) / (length * length);
        // Variance relaxes at twice the mode rate; take seven e-folds.
        let equil_time = 7.0 / (2.0 * slowest_rate);
        EquilibriumPlan {
            dt,
            equilibration_steps: (equil_time / dt).ceil() as u64,
            snapshots,
            sample_every: 15,
        }
    }
}

/// Pooled equilibrium counts of a pure-particle replica with `n` particles
/// on the 1D grid (uniform initial condition, exact counts per cell).
pub fn particle_equilibrium(grid: &GridSpec, n: u64, plan: &EquilibriumPlan, rng: &SimRng) -> PooledStats {
    assert_eq!(n % grid.cell_count() as u64, 0, "uniform scenario needs integer counts");
    let per_cell = n / grid.cell_count() as u64;
    let mut particles = Vec::with_capacity(n as usize);
    let mut id = 0u64;
    for linear in 0..grid.cell_count() {
        let cell = grid.from_linear(linear);
        let stream = rng.stream(StreamKind::InitPosition, &[linear as u64]);
        for ordinal in 0..per_cell {
            particles.push(particle::Particle {
                id,
                position: grid.sample_position_in_cell(cell, &stream, ordinal),
            });
            id += 1;
        }
    }
    let mut set = ParticleSet::with_particles(*grid, particles, id).unwrap();

    let vc = grid.cell_volume();
    let mut pooled = Moments::new();
    let mut step = 0u64;
    for _ in 0..plan.equilibration_steps {
        set = particle::random_walk_step(&set, plan.dt, rng, step).unwrap();
        step += 1;
    }
    for _ in 0..plan.snapshots {
        for _ in 0..plan.sample_every {
            set = particle::random_walk_step(&set, plan.dt, rng, step).unwrap();
            step += 1;
        }
        let binned = particle::bin_counts(&set);
        for q in binned.values() {
            pooled.push(q * vc);
        }
    }
    pooled_from(&pooled, 0)
}

/// Pooled equilibrium counts of a finite-volume replica at uniform density
/// `count_per_cell`.
pub fn fv_equilibrium(
    grid: &GridSpec,
    count_per_cell: f64,
    plan: &EquilibriumPlan,
    rng: &SimRng,
) -> PooledStats {
    let vc = grid.cell_volume();
    let mut field = ScalarField::constant(*grid, count_per_cell / vc).unwrap();
    let mut pooled = Moments::new();
    let mut negatives = 0u64;
    let mut step = 0u64;
    for _ in 0..plan.equilibration_steps {
        let noise = FaceNoise::new(rng, step, grid);
        field = fv::em_step(&field, &noise, plan.dt).unwrap();
        step += 1;
    }
    for _ in 0..plan.snapshots {
        for _ in 0..plan.sample_every {
            let noise = FaceNoise::new(rng, step, grid);
            field = fv::em_step(&field, &noise, plan.dt).unwrap();
            step += 1;
        }
        for q in field.values() {
            pooled.push(q * vc);
            if *q < 0.0 {
                negatives += 1;
            }
        }
    }
    pooled_from(&pooled, negatives)
}

/// Pooled equilibrium counts of the fluctuating field of a linearized
/// Gaussian replica.
pub fn gaussian_equilibrium(
    grid: &GridSpec,
    count_per_cell: f64,
    plan: &EquilibriumPlan,
    rng: &SimRng,
) -> PooledStats {
    let vc = grid.cell_volume();
    let mut state = GaussianState::new(&ScalarField::constant(*grid, count_per_cell / vc).unwrap());
    let mut pooled = Moments::new();
    let mut negatives = 0u64;
    let mut step = 0u64;
    for _ in 0..plan.equilibration_steps {
        let noise = FaceNoise::new(rng, step, grid);
        state = state.step(&noise, plan.dt).unwrap();
        step += 1;
    }
    for _ in 0..plan.snapshots {
        for _ in 0..plan.sample_every {
            let noise = FaceNoise::new(rng, step, grid);
            state = state.step(&noise, plan.dt).unwrap();
            step += 1;
        }
        for q in state.fluct.values() {
            pooled.push(q * vc);
            if *q < 0.0 {
                negatives += 1;
            }
        }
    }
    pooled_from(&pooled, negatives)
}

/// Run `replicas` independent replicas of `one` in parallel.
pub fn replicate<F>(seed: u64, replicas: u64, one: F) -> Vec<PooledStats>
where
    F: Fn(SimRng) -> PooledStats + Sync,
{
    let master = SimRng::new(seed);
    (0..replicas)
        .into_par_iter()
        .map(|r| one(master.member(r)))
        .collect()
}

/// Extract one statistic from each replica.
pub fn stat_of(replicas: &[PooledStats], f: impl Fn(&PooledStats) -> f64) -> Vec<f64> {
    replicas.iter().map(f).collect()
}

/// Member-resampling bootstrap standard error of `statistic` evaluated on
/// independent resamples of `a` and `b`, applied to the difference
/// `statistic(a*) - statistic(b*)`.
pub fn bootstrap_diff_se(
    a: &[f64],
    b: &[f64],
    statistic: impl Fn(&Moments) -> f64,
    resamples: u64,
    seed: u64,
) -> f64 {
    let rng = SimRng::new(seed);
    let mut diffs = Vec::with_capacity(resamples as usize);
    for r in 0..resamples {
        let stream_a = rng.stream(StreamKind::Member, &[2 * r]);
        let stream_b = rng.stream(StreamKind::Member, &[2 * r + 1]);
        let mut ma = Moments::new();
        for i in 0..a.len() as u64 {
            ma.push(a[(stream_a.next_u64(i) % a.len() as u64) as usize]);
        }
        let mut mb = Moments::new();
        for i in 0..b.len() as u64 {
            mb.push(b[(stream_b.next_u64(i) % b.len() as u64) as usize]);
        }
        diffs.push(statistic(&ma) - statistic(&mb));
    }
    let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
    let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>()
        / (diffs.len() as f64 - 1.0);
    var.sqrt()
}

/// Moments of a sample slice.
pub fn moments_of(values: &[f64]) -> Moments {
    let mut m = Moments::new();
    for v in values {
        m.push(*v);
    }
    m
}

pub fn pass(criterion: &str, detail: String) {
    println!("ACCEPTANCE {criterion}: PASS — {detail}");
}

pub fn fail(criterion: &str, detail: String) -> ! {
    println!("ACCEPTANCE {criterion}: FAIL — {detail}");
    panic!("ACCEPTANCE {criterion} failed: {detail}");
}
