//! Dynamic placement of the particle region: tagging, buffering, clustering
//! into boxes, and state transfer.

use alloc::vec::Vec;

use crate::error::Result;
use crate::field::ScalarField;
use crate::grid::GridSpec;
use crate::hybrid::{sample_particles_from_field, HybridState, SampleContext, SampleLog};
use crate::particle::{bin_counts, Particle, ParticleSet};
use crate::region::{offset_cell, IndexBox, ParticleRegion};
use crate::rng::SimRng;

/// Knobs of the refinement criterion.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegridPolicy {
    /// Particles-per-cell threshold: a cell needs the particle description
    /// when its (non-negative part of the) density times the cell volume
    /// falls strictly below this.
    pub threshold: f64,
    /// Tag dilation radius in cells (infinity norm).
    pub buffer: usize,
    /// Minimum tagged fraction a clustered box must reach.
    pub efficiency: f64,
    /// Steps between regrids; 0 disables regridding after initialization.
    pub interval: u64,
}

impl Default for RegridPolicy {
    fn default() -> Self {
        RegridPolicy {
            threshold: 10.0,
            buffer: 1,
            efficiency: 0.7,
            interval: 10,
        }
    }
}

impl RegridPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold >= 0.0 && self.threshold.is_finite()) {
            return Err(crate::Error::InvalidGrid("threshold must be finite and >= 0"));
        }
        if !(self.efficiency > 0.0 && self.efficiency <= 1.0) {
            return Err(crate::Error::InvalidGrid("efficiency must be in (0, 1]"));
        }
        Ok(())
    }
}

/// Boolean per cell: where the particle description is needed.
#[derive(Clone, Debug)]
pub struct TagMask {
    grid: GridSpec,
    tags: Vec<bool>,
}

impl TagMask {
    pub fn from_tags(grid: GridSpec, tags: Vec<bool>) -> Result<Self> {
        if tags.len() != grid.cell_count() {
            return Err(crate::Error::ShapeMismatch);
        }
        Ok(TagMask { grid, tags })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn is_tagged(&self, cell: [usize; 3]) -> bool {
        self.tags[self.grid.linear(cell)]
    }

    pub fn tagged_count(&self) -> usize {
        self.tags.iter().filter(|t| **t).count()
    }
}

/// Tag every cell whose particle count `max(q, 0) · Vc` is strictly below the
/// threshold, evaluated over the entire domain (including cells currently
/// covered by particles), then dilate by the buffer radius.
pub fn tag_cells(field: &ScalarField, policy: &RegridPolicy) -> TagMask {
    let grid = *field.grid();
    let vc = grid.cell_volume();
    let mut tags: Vec<bool> = field
        .values()
        .iter()
        .map(|q| q.max(0.0) * vc < policy.threshold)
        .collect();
    for _ in 0..policy.buffer {
        tags = dilate_once(&grid, &tags);
    }
    TagMask { grid, tags }
}

fn dilate_once(grid: &GridSpec, tags: &[bool]) -> Vec<bool> {
    let mut out = tags.to_vec();
    let offsets: [i64; 3] = [-1, 0, 1];
    let dim = grid.dim();
    for linear in 0..tags.len() {
        if out[linear] {
            continue;
        }
        let cell = grid.from_linear(linear);
        'search: for &dz in if dim > 2 { &offsets[..] } else { &offsets[1..2] } {
            for &dy in if dim > 1 { &offsets[..] } else { &offsets[1..2] } {
                for &dx in &offsets {
                    if dx == 0 && dy == 0 && dz == 0 {
                        continue;
                    }
                    if let Some(n) = offset_cell(grid, cell, [dx, dy, dz]) {
                        if tags[grid.linear(n)] {
                            out[linear] = true;
                            break 'search;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Decompose the tagged cells into disjoint boxes whose tagged fraction
/// reaches the efficiency target, by recursive bisection: boxes are shrunk to
/// the bounding box of their tags, then split at signature holes, else at the
/// steepest inflection of the signature Laplacian, else at the midpoint of
/// the longest axis, until they are efficient or single cells.
pub fn cluster(tags: &TagMask, efficiency: f64) -> Vec<IndexBox> {
    let grid = &tags.grid;
    let cells = grid.cells();
    let domain = IndexBox::new([0, 0, 0], [cells[0] - 1, cells[1] - 1, cells[2] - 1]);
    let mut stack = alloc::vec![domain];
    let mut out = Vec::new();
    while let Some(candidate) = stack.pop() {
        let Some(shrunk) = shrink_to_tags(tags, &candidate) else {
            continue;
        };
        let tagged = count_tags(tags, &shrunk);
        let fraction = tagged as f64 / shrunk.cell_count() as f64;
        if fraction >= efficiency || shrunk.cell_count() == 1 {
            out.push(shrunk);
            continue;
        }
        match choose_split(tags, &shrunk) {
            Some((left, right)) => {
                stack.push(left);
                stack.push(right);
            }
            None => out.push(shrunk),
        }
    }
    out.sort_by_key(|b| (b.lo[2], b.lo[1], b.lo[0]));
    out
}

fn shrink_to_tags(tags: &TagMask, within: &IndexBox) -> Option<IndexBox> {
    let mut lo = [usize::MAX; 3];
    let mut hi = [0usize; 3];
    let mut any = false;
    for cell in within.cells() {
        if tags.is_tagged(cell) {
            any = true;
            for a in 0..3 {
                lo[a] = lo[a].min(cell[a]);
                hi[a] = hi[a].max(cell[a]);
            }
        }
    }
    any.then(|| IndexBox::new(lo, hi))
}

fn count_tags(tags: &TagMask, b: &IndexBox) -> usize {
    b.cells().filter(|c| tags.is_tagged(*c)).count()
}

/// Tag counts per slice of `b` along `axis`.
fn signature(tags: &TagMask, b: &IndexBox, axis: usize) -> Vec<usize> {
    let len = b.hi[axis] - b.lo[axis] + 1;
    let mut sig = alloc::vec![0usize; len];
    for cell in b.cells() {
        if tags.is_tagged(cell) {
            sig[cell[axis] - b.lo[axis]] += 1;
        }
    }
    sig
}

/// Axes ordered longest first (ties by index), restricted to splittable ones.
fn axes_by_length(b: &IndexBox) -> Vec<usize> {
    let mut axes: Vec<usize> = (0..3).filter(|a| b.hi[*a] > b.lo[*a]).collect();
    axes.sort_by_key(|a| (usize::MAX - (b.hi[*a] - b.lo[*a]), *a));
    axes
}

fn split_at(b: &IndexBox, axis: usize, last_of_left: usize) -> (IndexBox, IndexBox) {
    let mut left = *b;
    let mut right = *b;
    left.hi[axis] = last_of_left;
    right.lo[axis] = last_of_left + 1;
    (left, right)
}

fn choose_split(tags: &TagMask, b: &IndexBox) -> Option<(IndexBox, IndexBox)> {
    let axes = axes_by_length(b);
    if axes.is_empty() {
        return None;
    }

    // 1. Holes: an interior slice with no tags. Prefer the one nearest the
    //    middle of the box; the empty plane is excluded from both halves.
    for &axis in &axes {
        let sig = signature(tags, b, axis);
        let mid = sig.len() / 2;
        let hole = (1..sig.len() - 1)
            .filter(|s| sig[*s] == 0)
            .min_by_key(|s| (s.abs_diff(mid), *s));
        if let Some(s) = hole {
            let (mut left, right) = split_at(b, axis, b.lo[axis] + s);
            left.hi[axis] -= 1; // drop the empty plane
            return Some((left, right));
        }
    }

    // 2. Steepest inflection of the signature Laplacian.
    let mut best: Option<(usize, usize, usize)> = None; // (delta, axis, cut)
    for &axis in &axes {
        let sig = signature(tags, b, axis);
        if sig.len() < 4 {
            continue;
        }
        let lap: Vec<i64> = (1..sig.len() - 1)
            .map(|s| sig[s + 1] as i64 - 2 * sig[s] as i64 + sig[s - 1] as i64)
            .collect();
        for w in 0..lap.len() - 1 {
            if lap[w] * lap[w + 1] < 0 {
                let delta = lap[w].abs_diff(lap[w + 1]) as usize;
                let cut = w + 1; // slices [0..=cut] go left
                let better = match best {
                    None => true,
                    Some((d, a, c)) => delta > d || (delta == d && (axis, cut) < (a, c)),
                };
                if better {
                    best = Some((delta, axis, cut));
                }
            }
        }
    }
    if let Some((_, axis, cut)) = best {
        return Some(split_at(b, axis, b.lo[axis] + cut));
    }

    // 3. Midpoint of the longest axis.
    let axis = axes[0];
    let len = b.hi[axis] - b.lo[axis] + 1;
    Some(split_at(b, axis, b.lo[axis] + len / 2 - 1))
}

/// Outcome of a regrid event.
#[derive(Clone, Copy, Debug, Default)]
pub struct RegridLog {
    /// Mass bookkeeping of the conditional sampling that filled cells newly
    /// entering the region; this is the step's exact composite-mass change.
    pub sampling: SampleLog,
}

/// Move the state onto a new particle region: cells in both regions keep
/// their exact particles, cells entering the region are filled by conditional
/// sampling from the field, and cells leaving it drop their particles while
/// the field retains their binned value.
pub fn apply_regrid(
    state: &HybridState,
    new_boxes: Vec<IndexBox>,
    rng: &SimRng,
    step: u64,
) -> Result<(HybridState, RegridLog)> {
    let grid = *state.field.grid();
    let new_region = ParticleRegion::new(grid, new_boxes)?;

    let mut kept: Vec<Particle> = Vec::with_capacity(state.particles.len());
    for p in state.particles.particles() {
        let cell = grid.cell_of_position(&p.position)?;
        if new_region.contains(cell) && state.region.contains(cell) {
            kept.push(*p);
        }
    }
    let mut set = ParticleSet::with_particles(grid, kept, state.particles.next_id())?;

    let entering: Vec<[usize; 3]> = new_region
        .cells()
        .filter(|c| !state.region.contains(*c))
        .collect();
    let sampling = sample_particles_from_field(
        &state.field,
        &entering,
        SampleContext::Regrid,
        rng,
        step,
        |_cell, _ordinal, position| {
            let id = set.allocate_id();
            set.push(Particle { id, position });
        },
    );

    // Entering cells take their sampled integer density; persisting cells
    // already hold their binned value, so the overwrite is a no-op there.
    let binned = bin_counts(&set);
    let mut field = state.field.clone();
    for cell in new_region.cells() {
        field.set(cell, binned.get(cell));
    }

    Ok((
        HybridState {
            field,
            region: new_region,
            particles: set,
        },
        RegridLog { sampling },
    ))
}
