use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use dkh::config::SimConfig;
use dkh::runner;

#[derive(Parser)]
#[command(name = "dkh", version, about = "Brownian particle / fluctuating-density simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a configured simulation ensemble and write its output files.
    Run(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Key=value configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Override: particle | fv | gaussian | hybrid.
    #[arg(long)]
    method: Option<String>,
    /// Override: cell counts, e.g. `100` or `64,64`.
    #[arg(long)]
    cells: Option<String>,
    /// Override: time step (`auto` or a number).
    #[arg(long)]
    dt: Option<String>,
    /// Override: number of steps.
    #[arg(long)]
    steps: Option<u64>,
    /// Override: ensemble size.
    #[arg(long)]
    ensemble: Option<u64>,
    /// Override: master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override: particles-per-cell refinement threshold.
    #[arg(long)]
    theta: Option<f64>,
    /// Override: steps between regrids (0 disables).
    #[arg(long = "regrid-interval")]
    regrid_interval: Option<u64>,
    /// Override: output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn overrides(&self) -> BTreeMap<String, String> {
        let mut map = BTreeMap::new();
        let mut put = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                map.insert(k.to_string(), v);
            }
        };
        put("method", self.method.clone());
        put("cells", self.cells.clone());
        put("dt", self.dt.clone());
        put("steps", self.steps.map(|v| v.to_string()));
        put("ensemble", self.ensemble.map(|v| v.to_string()));
        put("seed", self.seed.map(|v| v.to_string()));
        put("theta", self.theta.map(|v| v.to_string()));
        put("regrid_interval", self.regrid_interval.map(|v| v.to_string()));
        put("out", self.out.as_ref().map(|v| v.display().to_string()));
        map
    }
}

fn main() -> Result<()> {
    env_logger::init();
    let cli = Cli::parse();
    match cli.command {
        Command::Run(args) => {
            let config = SimConfig::from_file(&args.config, &args.overrides())?;
            let run = runner::run_to_dir(&config)?;
            let last = run.mass.last().expect("at least the initial row");
            println!(
                "{} ensemble of {} finished: {} steps, final mean mass {}, min value {}, outputs in {}",
                config.method,
                config.ensemble,
                config.steps,
                last.mean_mass,
                last.min_value,
                config.out_dir.display()
            );
        }
    }
    Ok(())
}
