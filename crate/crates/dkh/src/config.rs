//! Flat key=value run configuration with command-line overrides.
//!
//! The format is one `key = value` per line, `#` starting a comment. The
//! effective (fully resolved) configuration is echoed into the output
//! directory; parsing that echo reproduces the identical run.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use dkh_core::fv::stability_max_dt;
use dkh_core::grid::{BoundaryCondition, GridSpec};
use dkh_core::regrid::RegridPolicy;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Particle,
    Fv,
    Gaussian,
    Hybrid,
}

impl Method {
    pub fn parse(s: &str) -> Result<Method> {
        Ok(match s {
            "particle" => Method::Particle,
            "fv" => Method::Fv,
            "gaussian" => Method::Gaussian,
            "hybrid" => Method::Hybrid,
            other => bail!("unknown method `{other}` (expected particle|fv|gaussian|hybrid)"),
        })
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Particle => "particle",
            Method::Fv => "fv",
            Method::Gaussian => "gaussian",
            Method::Hybrid => "hybrid",
        })
    }
}

/// Time step: fixed, or derived from the grid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DtSpec {
    /// `stability_max_dt(grid) / 16`: comfortably inside the deterministic
    /// stability bound, and small enough that a particle step larger than one
    /// cell spacing is a ≥4σ event (clamp probability ≤ 2Φ(-4) ≈ 6e-5).
    Auto,
    Fixed(f64),
}

/// Initial-condition families.
#[derive(Clone, Debug, PartialEq)]
pub enum Scenario {
    /// Constant density; equilibrium studies.
    Uniform { particles_per_cell: f64 },
    /// 1D: density `density` outside `[lo, hi]`, zero inside.
    Void1d { density: f64, lo: f64, hi: f64 },
    /// 2D: an inner ellipse at `inner_count` per cell, an annular ellipse at
    /// `ring_count`, background at `background_count`.
    Ellipses2d {
        inner_radii: [f64; 2],
        outer_radii: [f64; 2],
        inner_count: f64,
        ring_count: f64,
        background_count: f64,
    },
    /// 3D spheres, same density layout as the 2D case.
    Spheres3d {
        inner_radius: f64,
        outer_radius: f64,
        inner_count: f64,
        ring_count: f64,
        background_count: f64,
    },
}

impl Scenario {
    pub fn name(&self) -> &'static str {
        match self {
            Scenario::Uniform { .. } => "uniform",
            Scenario::Void1d { .. } => "1d_void",
            Scenario::Ellipses2d { .. } => "2d_ellipses",
            Scenario::Spheres3d { .. } => "3d_spheres",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub method: Method,
    pub cells: Vec<usize>,
    pub extents: Vec<f64>,
    pub bc: Vec<BoundaryCondition>,
    pub dt: DtSpec,
    pub steps: u64,
    pub ensemble: u64,
    pub seed: u64,
    pub policy: RegridPolicy,
    pub scenario: Scenario,
    pub out_dir: PathBuf,
    /// Snapshot/statistics cadence in steps; 0 records only the initial and
    /// final states.
    pub output_every: u64,
    /// First step whose fields enter the PDF histogram.
    pub pdf_start_step: u64,
    /// Worker threads for the ensemble; 0 uses all available.
    pub threads: usize,
}

impl SimConfig {
    pub fn dim(&self) -> usize {
        self.cells.len()
    }

    pub fn grid(&self) -> Result<GridSpec> {
        GridSpec::new(self.dim(), &self.cells, &self.extents, &self.bc)
            .map_err(|e| anyhow!("invalid grid: {e}"))
    }

    pub fn resolved_dt(&self, grid: &GridSpec) -> f64 {
        match self.dt {
            DtSpec::Auto => stability_max_dt(grid) / 16.0,
            DtSpec::Fixed(dt) => dt,
        }
    }

    /// Steps at which snapshots and ensemble statistics are recorded.
    pub fn is_recorded_step(&self, step: u64) -> bool {
        step == 0
            || step == self.steps
            || (self.output_every > 0 && step % self.output_every == 0)
    }

    pub fn from_file(path: &Path, overrides: &BTreeMap<String, String>) -> Result<SimConfig> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut map = parse_key_values(&text)?;
        for (k, v) in overrides {
            map.insert(k.clone(), v.clone());
        }
        SimConfig::from_map(map)
    }

    pub fn from_text(text: &str) -> Result<SimConfig> {
        SimConfig::from_map(parse_key_values(text)?)
    }

    fn from_map(mut map: BTreeMap<String, String>) -> Result<SimConfig> {
        let mut take = |key: &str| map.remove(key);

        let method = Method::parse(&take("method").ok_or_else(|| anyhow!("missing `method`"))?)?;
        let cells = parse_usize_list(&take("cells").ok_or_else(|| anyhow!("missing `cells`"))?)?;
        let dim = cells.len();
        if !(1..=3).contains(&dim) {
            bail!("`cells` must list 1 to 3 axes");
        }
        let extents = match take("extent") {
            Some(s) => broadcast(parse_f64_list(&s)?, dim, "extent")?,
            None => vec![1.0; dim],
        };
        let bc = match take("bc") {
            Some(s) => broadcast(parse_bc_list(&s)?, dim, "bc")?,
            None => vec![BoundaryCondition::Periodic; dim],
        };
        let dt = match take("dt").as_deref() {
            None | Some("auto") => DtSpec::Auto,
            Some(s) => DtSpec::Fixed(
                s.parse::<f64>()
                    .with_context(|| format!("invalid dt `{s}`"))?,
            ),
        };
        if let DtSpec::Fixed(v) = dt {
            if !(v > 0.0 && v.is_finite()) {
                bail!("dt must be positive and finite");
            }
        }
        let steps = parse_or(&mut take, "steps", 0u64)?;
        let ensemble = parse_or(&mut take, "ensemble", 1u64)?;
        if ensemble == 0 {
            bail!("ensemble must be at least 1");
        }
        let seed = parse_or(&mut take, "seed", 0u64)?;

        let default_policy = RegridPolicy::default();
        let policy = RegridPolicy {
            threshold: parse_or(&mut take, "theta", default_policy.threshold)?,
            buffer: parse_or(&mut take, "buffer", default_policy.buffer)?,
            efficiency: parse_or(&mut take, "efficiency", default_policy.efficiency)?,
            interval: parse_or(&mut take, "regrid_interval", default_policy.interval)?,
        };
        policy
            .validate()
            .map_err(|e| anyhow!("invalid regrid policy: {e}"))?;

        let scenario_name = take("scenario").unwrap_or_else(|| "uniform".to_string());
        let scenario = match scenario_name.as_str() {
            "uniform" => Scenario::Uniform {
                particles_per_cell: parse_or(&mut take, "particles_per_cell", 20.0)?,
            },
            "1d_void" => Scenario::Void1d {
                density: parse_or(&mut take, "density", 2000.0)?,
                lo: parse_or(&mut take, "void_lo", 0.25)?,
                hi: parse_or(&mut take, "void_hi", 0.75)?,
            },
            "2d_ellipses" => Scenario::Ellipses2d {
                inner_radii: [
                    parse_or(&mut take, "inner_rx", 0.15)?,
                    parse_or(&mut take, "inner_ry", 0.10)?,
                ],
                outer_radii: [
                    parse_or(&mut take, "outer_rx", 0.30)?,
                    parse_or(&mut take, "outer_ry", 0.22)?,
                ],
                inner_count: parse_or(&mut take, "inner_count", 15.0)?,
                ring_count: parse_or(&mut take, "ring_count", 0.0)?,
                background_count: parse_or(&mut take, "background_count", 30.0)?,
            },
            "3d_spheres" => Scenario::Spheres3d {
                inner_radius: parse_or(&mut take, "inner_r", 0.15)?,
                outer_radius: parse_or(&mut take, "outer_r", 0.30)?,
                inner_count: parse_or(&mut take, "inner_count", 15.0)?,
                ring_count: parse_or(&mut take, "ring_count", 0.0)?,
                background_count: parse_or(&mut take, "background_count", 30.0)?,
            },
            other => bail!("unknown scenario `{other}`"),
        };

        let out_dir = PathBuf::from(take("out").unwrap_or_else(|| "out".to_string()));
        let output_every = parse_or(&mut take, "output_every", 0u64)?;
        let pdf_start_step = parse_or(&mut take, "pdf_start_step", 0u64)?;
        let threads = parse_or(&mut take, "threads", 0usize)?;

        if !map.is_empty() {
            let keys: Vec<&str> = map.keys().map(|s| s.as_str()).collect();
            bail!("unknown config keys: {}", keys.join(", "));
        }

        let config = SimConfig {
            method,
            cells,
            extents,
            bc,
            dt,
            steps,
            ensemble,
            seed,
            policy,
            scenario,
            out_dir,
            output_every,
            pdf_start_step,
            threads,
        };
        config.grid()?; // validate geometry early
        config.validate_scenario()?;
        Ok(config)
    }

    fn validate_scenario(&self) -> Result<()> {
        match &self.scenario {
            Scenario::Uniform { particles_per_cell } => {
                if *particles_per_cell < 0.0 {
                    bail!("particles_per_cell must be non-negative");
                }
            }
            Scenario::Void1d { density, lo, hi } => {
                if self.dim() != 1 {
                    bail!("1d_void requires a one-dimensional grid");
                }
                if *density < 0.0 || lo > hi {
                    bail!("1d_void needs density >= 0 and void_lo <= void_hi");
                }
            }
            Scenario::Ellipses2d {
                inner_radii,
                outer_radii,
                inner_count,
                ring_count,
                background_count,
            } => {
                if self.dim() != 2 {
                    bail!("2d_ellipses requires a two-dimensional grid");
                }
                if inner_radii.iter().zip(outer_radii).any(|(i, o)| i > o) {
                    bail!("inner ellipse radii must not exceed the outer radii");
                }
                if [*inner_count, *ring_count, *background_count]
                    .iter()
                    .any(|c| *c < 0.0)
                {
                    bail!("per-cell counts must be non-negative");
                }
            }
            Scenario::Spheres3d {
                inner_radius,
                outer_radius,
                inner_count,
                ring_count,
                background_count,
            } => {
                if self.dim() != 3 {
                    bail!("3d_spheres requires a three-dimensional grid");
                }
                if inner_radius > outer_radius {
                    bail!("inner sphere radius must not exceed the outer radius");
                }
                if [*inner_count, *ring_count, *background_count]
                    .iter()
                    .any(|c| *c < 0.0)
                {
                    bail!("per-cell counts must be non-negative");
                }
            }
        }
        Ok(())
    }

    /// Fully resolved key=value text; parsing it reproduces this run.
    pub fn effective_text(&self, grid: &GridSpec) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        };
        kv("method", self.method.to_string());
        kv("cells", join(self.cells.iter()));
        kv("extent", join(self.extents.iter()));
        kv(
            "bc",
            self.bc
                .iter()
                .map(|b| match b {
                    BoundaryCondition::Periodic => "periodic",
                    BoundaryCondition::HomogeneousNeumann => "neumann",
                })
                .collect::<Vec<_>>()
                .join(","),
        );
        kv("dt", format!("{}", self.resolved_dt(grid)));
        kv("steps", self.steps.to_string());
        kv("ensemble", self.ensemble.to_string());
        kv("seed", self.seed.to_string());
        kv("theta", self.policy.threshold.to_string());
        kv("buffer", self.policy.buffer.to_string());
        kv("efficiency", self.policy.efficiency.to_string());
        kv("regrid_interval", self.policy.interval.to_string());
        kv("scenario", self.scenario.name().to_string());
        match &self.scenario {
            Scenario::Uniform { particles_per_cell } => {
                kv("particles_per_cell", particles_per_cell.to_string());
            }
            Scenario::Void1d { density, lo, hi } => {
                kv("density", density.to_string());
                kv("void_lo", lo.to_string());
                kv("void_hi", hi.to_string());
            }
            Scenario::Ellipses2d {
                inner_radii,
                outer_radii,
                inner_count,
                ring_count,
                background_count,
            } => {
                kv("inner_rx", inner_radii[0].to_string());
                kv("inner_ry", inner_radii[1].to_string());
                kv("outer_rx", outer_radii[0].to_string());
                kv("outer_ry", outer_radii[1].to_string());
                kv("inner_count", inner_count.to_string());
                kv("ring_count", ring_count.to_string());
                kv("background_count", background_count.to_string());
            }
            Scenario::Spheres3d {
                inner_radius,
                outer_radius,
                inner_count,
                ring_count,
                background_count,
            } => {
                kv("inner_r", inner_radius.to_string());
                kv("outer_r", outer_radius.to_string());
                kv("inner_count", inner_count.to_string());
                kv("ring_count", ring_count.to_string());
                kv("background_count", background_count.to_string());
            }
        }
        kv("out", self.out_dir.display().to_string());
        kv("output_every", self.output_every.to_string());
        kv("pdf_start_step", self.pdf_start_step.to_string());
        kv("threads", self.threads.to_string());
        out
    }
}

fn join<T: ToString>(items: impl Iterator<Item = T>) -> String {
    items
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("line {}: expected `key = value`", lineno + 1))?;
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

fn parse_or<T: std::str::FromStr>(
    take: &mut impl FnMut(&str) -> Option<String>,
    key: &str,
    default: T,
) -> Result<T>
where
    T::Err: std::error::Error + Send + Sync + 'static,
{
    match take(key) {
        Some(s) => s
            .parse::<T>()
            .with_context(|| format!("invalid value for `{key}`: `{s}`")),
        None => Ok(default),
    }
}

fn parse_usize_list(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|p| p.trim().parse::<usize>().with_context(|| format!("invalid integer `{p}`")))
        .collect()
}

fn parse_f64_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|p| p.trim().parse::<f64>().with_context(|| format!("invalid number `{p}`")))
        .collect()
}

fn parse_bc_list(s: &str) -> Result<Vec<BoundaryCondition>> {
    s.split(',')
        .map(|p| match p.trim() {
            "periodic" => Ok(BoundaryCondition::Periodic),
            "neumann" => Ok(BoundaryCondition::HomogeneousNeumann),
            other => bail!("unknown boundary condition `{other}`"),
        })
        .collect()
}

fn broadcast<T: Clone>(values: Vec<T>, dim: usize, what: &str) -> Result<Vec<T>> {
    if values.len() == dim {
        Ok(values)
    } else if values.len() == 1 {
        Ok(vec![values[0].clone(); dim])
    } else {
        bail!("`{what}` must have 1 or {dim} entries")
    }
}
