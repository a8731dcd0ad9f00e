//! Delimited-text output files. Every table carries a '#'-prefixed metadata
//! block (version, seed, dt, method, grid, scenario) and a header row naming
//! its columns.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};

use crate::config::SimConfig;
use crate::runner::RunAggregates;

const VERSION: &str = env!("CARGO_PKG_VERSION");

fn metadata(config: &SimConfig, run: &RunAggregates) -> String {
    let cells = config
        .cells
        .iter()
        .map(|c| c.to_string())
        .collect::<Vec<_>>()
        .join(",");
    format!(
        "# dkh {VERSION}\n# method={} seed={} dt={} steps={} ensemble={} cells={} scenario={}\n",
        config.method, config.seed, run.dt, config.steps, config.ensemble, cells,
        config.scenario.name(),
    )
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
}

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(x) => x.to_string(),
        None => "nan".to_string(),
    }
}

/// Write config.effective, stats.csv, pdf.csv, mass.csv, regions.csv (hybrid
/// runs), and snapshot_{step}.csv files into the configured output directory.
pub fn write_all(config: &SimConfig, run: &RunAggregates) -> Result<()> {
    let dir = &config.out_dir;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let meta = metadata(config, run);

    write_file(dir, "config.effective", &config.effective_text(&run.grid))?;

    // Per-cell ensemble moments at recorded steps. Moments are population
    // moments over ensemble members; kurtosis is non-excess.
    let mut stats = String::new();
    stats.push_str(&meta);
    stats.push_str("# population moments over ensemble members at each recorded step\n");
    stats.push_str("step,i,j,k,mean,variance,skewness,kurtosis\n");
    for (step, acc) in &run.stats {
        if acc.count() < 2 {
            continue;
        }
        let cells = acc.finalize().expect("count checked above");
        for (linear, m) in cells.iter().enumerate() {
            let cell = run.grid.from_linear(linear);
            writeln!(
                stats,
                "{step},{},{},{},{},{},{},{}",
                cell[0],
                cell[1],
                cell[2],
                m.mean,
                m.variance,
                fmt_opt(m.skewness),
                fmt_opt(m.kurtosis),
            )
            .unwrap();
        }
    }
    write_file(dir, "stats.csv", &stats)?;

    // Field-value PDF over particle-width bins; centers are in particles per
    // cell. Pooled over members, cells, and recorded steps >= pdf_start_step.
    let mut pdf = String::new();
    pdf.push_str(&meta);
    pdf.push_str("# pooled over ensemble members, cells, and recorded steps\n");
    pdf.push_str("bin_center_particles,probability,method\n");
    let vc = run.grid.cell_volume();
    for (_, center_density, p) in run.histogram.probabilities() {
        writeln!(pdf, "{},{},{}", center_density * vc, p, config.method).unwrap();
    }
    write_file(dir, "pdf.csv", &pdf)?;

    let mut mass = String::new();
    mass.push_str(&meta);
    mass.push_str("# total_mass is the ensemble mean; negative_cell_count sums over members;\n");
    mass.push_str("# min_value is the minimum over members\n");
    mass.push_str("step,total_mass,negative_cell_count,min_value\n");
    for (step, row) in run.mass.iter().enumerate() {
        writeln!(
            mass,
            "{step},{},{},{}",
            row.mean_mass, row.negative_cells, row.min_value
        )
        .unwrap();
    }
    write_file(dir, "mass.csv", &mass)?;

    if matches!(config.method, crate::config::Method::Hybrid) {
        let mut regions = String::new();
        regions.push_str(&meta);
        regions.push_str("# particle-region boxes of ensemble member 0 (inclusive index ranges),\n");
        regions.push_str("# one block per initialization/regrid event\n");
        regions.push_str("step,box_id,lo_i,lo_j,lo_k,hi_i,hi_j,hi_k\n");
        for (step, boxes) in &run.regions {
            for (id, b) in boxes.iter().enumerate() {
                writeln!(
                    regions,
                    "{step},{id},{},{},{},{},{},{}",
                    b.lo[0], b.lo[1], b.lo[2], b.hi[0], b.hi[1], b.hi[2]
                )
                .unwrap();
            }
        }
        write_file(dir, "regions.csv", &regions)?;
    }

    for (step, field) in &run.snapshots {
        let mut snap = String::new();
        snap.push_str(&meta);
        snap.push_str("# field raster of ensemble member 0\n");
        snap.push_str("i,j,k,q\n");
        for (linear, q) in field.values().iter().enumerate() {
            let cell = run.grid.from_linear(linear);
            writeln!(snap, "{},{},{},{}", cell[0], cell[1], cell[2], q).unwrap();
        }
        write_file(dir, &format!("snapshot_{step}.csv"), &snap)?;
    }

    Ok(())
}
