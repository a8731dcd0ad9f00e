//! Ensemble execution.
//!
//! Every ensemble member runs from its own derived random stream
//! (`master seed`, `member index`). Members are folded into fixed-size blocks
//! that are processed in parallel and merged in block order, so serial and
//! parallel runs produce identical statistics files byte for byte.

use std::borrow::Cow;

use anyhow::{anyhow, Context, Result};
use dkh_core::fv::{self, FaceNoise};
use dkh_core::gaussian::GaussianState;
use dkh_core::grid::GridSpec;
use dkh_core::hybrid::{self, HybridState};
use dkh_core::particle::{self, ParticleSet};
use dkh_core::region::IndexBox;
use dkh_core::regrid::{self, RegridPolicy};
use dkh_core::rng::SimRng;
use dkh_core::stats::{Histogram, MomentAccumulator};
use dkh_core::ScalarField;
use rayon::prelude::*;

use crate::config::{Method, SimConfig};
use crate::output;
use crate::scenario;

/// Members per fold block. Fixed so the merge tree does not depend on the
/// number of worker threads.
const BLOCK: u64 = 64;

/// Per-step scalars aggregated over the ensemble.
#[derive(Clone, Copy, Debug, Default)]
pub struct MassRow {
    /// Ensemble mean of the composite total mass.
    pub mean_mass: f64,
    /// Negative cells summed over members.
    pub negative_cells: u64,
    /// Minimum field value over members.
    pub min_value: f64,
    /// Ensemble mean of the probabilistic-rounding mass delta introduced at
    /// this step (regrid sampling; zero on steps without one).
    pub mean_rounding_delta: f64,
}

/// Everything a run produces, in memory.
pub struct RunAggregates {
    pub grid: GridSpec,
    pub dt: f64,
    /// Rows for steps `0..=steps`.
    pub mass: Vec<MassRow>,
    /// Per-cell ensemble moments at every recorded step.
    pub stats: Vec<(u64, MomentAccumulator)>,
    /// Field-value histogram pooled over recorded steps, cells, and members.
    pub histogram: Histogram,
    /// Member 0 snapshots at recorded steps.
    pub snapshots: Vec<(u64, ScalarField)>,
    /// Member 0 particle-region boxes at initialization and each regrid.
    pub regions: Vec<(u64, Vec<IndexBox>)>,
}

struct Aggregates {
    members: u64,
    mass_sum: Vec<f64>,
    neg_sum: Vec<u64>,
    min_min: Vec<f64>,
    rounding_sum: Vec<f64>,
    stats: Vec<(u64, MomentAccumulator)>,
    histogram: Histogram,
    snapshots: Vec<(u64, ScalarField)>,
    regions: Vec<(u64, Vec<IndexBox>)>,
}

impl Aggregates {
    fn new(config: &SimConfig, grid: &GridSpec, histogram: &Histogram) -> Self {
        let rows = config.steps as usize + 1;
        let recorded: Vec<u64> = (0..=config.steps)
            .filter(|s| config.is_recorded_step(*s))
            .collect();
        Aggregates {
            members: 0,
            mass_sum: vec![0.0; rows],
            neg_sum: vec![0; rows],
            min_min: vec![f64::INFINITY; rows],
            rounding_sum: vec![0.0; rows],
            stats: recorded
                .iter()
                .map(|s| (*s, MomentAccumulator::new(*grid)))
                .collect(),
            histogram: histogram.clone(),
            snapshots: Vec::new(),
            regions: Vec::new(),
        }
    }

    fn merge(&mut self, other: Aggregates) -> Result<()> {
        self.members += other.members;
        for (a, b) in self.mass_sum.iter_mut().zip(&other.mass_sum) {
            *a += b;
        }
        for (a, b) in self.neg_sum.iter_mut().zip(&other.neg_sum) {
            *a += b;
        }
        for (a, b) in self.min_min.iter_mut().zip(&other.min_min) {
            *a = a.min(*b);
        }
        for (a, b) in self.rounding_sum.iter_mut().zip(&other.rounding_sum) {
            *a += b;
        }
        for ((_, a), (_, b)) in self.stats.iter_mut().zip(&other.stats) {
            a.merge(b).map_err(|e| anyhow!("stats merge: {e}"))?;
        }
        self.histogram
            .merge(&other.histogram)
            .map_err(|e| anyhow!("histogram merge: {e}"))?;
        if self.snapshots.is_empty() {
            self.snapshots = other.snapshots;
        }
        if self.regions.is_empty() {
            self.regions = other.regions;
        }
        Ok(())
    }
}

enum Engine {
    Particle(ParticleSet),
    Fv(ScalarField),
    Gaussian(GaussianState),
    Hybrid {
        state: HybridState,
        policy: RegridPolicy,
    },
}

impl Engine {
    fn new(config: &SimConfig, grid: &GridSpec, rng: &SimRng) -> Result<Engine> {
        let need_particles =
            matches!(config.method, Method::Particle | Method::Hybrid);
        let initial = scenario::build(&config.scenario, grid, rng, need_particles)?;
        Ok(match config.method {
            Method::Particle => Engine::Particle(initial.particles.expect("requested")),
            Method::Fv => Engine::Fv(initial.field),
            Method::Gaussian => Engine::Gaussian(GaussianState::new(&initial.field)),
            Method::Hybrid => {
                let (state, _) = hybrid::initialize(
                    &initial.field,
                    initial.particles.as_ref(),
                    &config.policy,
                    rng,
                )
                .map_err(|e| anyhow!("hybrid initialization: {e}"))?;
                Engine::Hybrid {
                    state,
                    policy: config.policy,
                }
            }
        })
    }

    /// Regrid if the policy calls for one before advancing `step`.
    /// Returns the sampling mass delta when a regrid ran.
    fn maybe_regrid(&mut self, step: u64, rng: &SimRng) -> Result<Option<f64>> {
        let Engine::Hybrid { state, policy } = self else {
            return Ok(None);
        };
        if policy.interval == 0 || step == 0 || step % policy.interval != 0 {
            return Ok(None);
        }
        let tags = regrid::tag_cells(&state.field, policy);
        let boxes = regrid::cluster(&tags, policy.efficiency);
        let (next, log) = regrid::apply_regrid(state, boxes, rng, step)
            .map_err(|e| anyhow!("regrid at step {step}: {e}"))?;
        *state = next;
        Ok(Some(log.sampling.rounding_delta))
    }

    fn advance(&mut self, dt: f64, rng: &SimRng, step: u64) -> Result<()> {
        match self {
            Engine::Particle(set) => {
                *set = particle::random_walk_step(set, dt, rng, step)
                    .map_err(|e| anyhow!("particle step {step}: {e}"))?;
            }
            Engine::Fv(field) => {
                let noise = FaceNoise::new(rng, step, field.grid());
                *field = fv::em_step(field, &noise, dt)
                    .map_err(|e| anyhow!("fv step {step}: {e}"))?;
            }
            Engine::Gaussian(state) => {
                let noise = FaceNoise::new(rng, step, state.fluct.grid());
                *state = state
                    .step(&noise, dt)
                    .map_err(|e| anyhow!("gaussian step {step}: {e}"))?;
            }
            Engine::Hybrid { state, .. } => {
                let (next, _) = hybrid::advance_hybrid_step(state, dt, rng, step)
                    .map_err(|e| anyhow!("hybrid step {step}: {e}"))?;
                *state = next;
            }
        }
        Ok(())
    }

    /// The field this method reports: binned counts for particles, the
    /// fluctuating field for the Gaussian method, the composite for hybrid.
    fn field(&self) -> Cow<'_, ScalarField> {
        match self {
            Engine::Particle(set) => Cow::Owned(particle::bin_counts(set)),
            Engine::Fv(field) => Cow::Borrowed(field),
            Engine::Gaussian(state) => Cow::Borrowed(&state.fluct),
            Engine::Hybrid { state, .. } => Cow::Borrowed(&state.field),
        }
    }

    fn region_boxes(&self) -> Option<Vec<IndexBox>> {
        match self {
            Engine::Hybrid { state, .. } => Some(state.region.boxes().to_vec()),
            _ => None,
        }
    }
}

fn simulate_member(
    config: &SimConfig,
    grid: &GridSpec,
    dt: f64,
    member: u64,
    acc: &mut Aggregates,
) -> Result<()> {
    let rng = SimRng::new(config.seed).member(member);
    let capture = member == 0;
    let mut engine = Engine::new(config, grid, &rng)?;
    if capture {
        if let Some(boxes) = engine.region_boxes() {
            acc.regions.push((0, boxes));
        }
    }

    let mut record_index = 0usize;
    let mut observe = |engine: &Engine, step: u64, rounding: f64, acc: &mut Aggregates| {
        let field = engine.field();
        let row = step as usize;
        acc.mass_sum[row] += field.total_mass();
        acc.neg_sum[row] += field.negative_cell_count() as u64;
        acc.min_min[row] = acc.min_min[row].min(field.min_value());
        acc.rounding_sum[row] += rounding;
        if config.is_recorded_step(step) {
            let (s, stats) = &mut acc.stats[record_index];
            debug_assert_eq!(*s, step);
            stats
                .accumulate(&field)
                .map_err(|e| anyhow!("stats accumulate: {e}"))?;
            if step >= config.pdf_start_step {
                acc.histogram.record_field(&field);
            }
            if capture {
                acc.snapshots.push((step, field.into_owned()));
            }
            record_index += 1;
        }
        Ok::<(), anyhow::Error>(())
    };

    observe(&engine, 0, 0.0, acc)?;
    for step in 0..config.steps {
        let regrid_delta = engine.maybe_regrid(step, &rng)?;
        if capture {
            if regrid_delta.is_some() {
                if let Some(boxes) = engine.region_boxes() {
                    acc.regions.push((step, boxes));
                }
            }
        }
        engine.advance(dt, &rng, step)?;
        observe(&engine, step + 1, regrid_delta.unwrap_or(0.0), acc)?;
    }
    acc.members += 1;
    Ok(())
}

/// Histogram range wide enough for the scenario: from comfortably below zero
/// to several standard deviations above the largest initial count.
fn histogram_for(config: &SimConfig, grid: &GridSpec) -> Histogram {
    let counts = scenario::counts_per_cell(&config.scenario, grid);
    let max_count = counts.iter().cloned().fold(0.0f64, f64::max);
    let spread = (6.0 * max_count.sqrt()).ceil() as i64 + 10;
    let k_max = max_count.ceil() as i64 + spread;
    let k_min = -spread;
    Histogram::new(grid.cell_volume(), k_min, k_max).expect("valid histogram range")
}

/// Run the configured ensemble to memory.
pub fn run(config: &SimConfig) -> Result<RunAggregates> {
    let grid = config.grid()?;
    let dt = config.resolved_dt(&grid);
    if !(dt > 0.0) {
        anyhow::bail!("resolved dt must be positive");
    }

    let template = histogram_for(config, &grid);
    let blocks: Vec<(u64, u64)> = (0..config.ensemble)
        .step_by(BLOCK as usize)
        .map(|start| (start, (start + BLOCK).min(config.ensemble)))
        .collect();

    let fold_block = |(start, end): (u64, u64)| -> Result<Aggregates> {
        let mut acc = Aggregates::new(config, &grid, &template);
        for member in start..end {
            simulate_member(config, &grid, dt, member, &mut acc)?;
        }
        Ok(acc)
    };

    let folded: Vec<Result<Aggregates>> = if config.threads == 1 {
        blocks.into_iter().map(fold_block).collect()
    } else if config.threads == 0 {
        blocks.into_par_iter().map(fold_block).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.threads)
            .build()
            .context("building thread pool")?;
        pool.install(|| blocks.into_par_iter().map(fold_block).collect())
    };

    let mut total = Aggregates::new(config, &grid, &template);
    for block in folded {
        total.merge(block?)?;
    }

    let members = total.members as f64;
    let mass = (0..total.mass_sum.len())
        .map(|row| MassRow {
            mean_mass: total.mass_sum[row] / members,
            negative_cells: total.neg_sum[row],
            min_value: total.min_min[row],
            mean_rounding_delta: total.rounding_sum[row] / members,
        })
        .collect();

    Ok(RunAggregates {
        grid,
        dt,
        mass,
        stats: total.stats,
        histogram: total.histogram,
        snapshots: total.snapshots,
        regions: total.regions,
    })
}

/// Run the ensemble and write all output files into `config.out_dir`.
pub fn run_to_dir(config: &SimConfig) -> Result<RunAggregates> {
    let aggregates = run(config)?;
    output::write_all(config, &aggregates)?;
    Ok(aggregates)
}
