//! Configuration, scenario construction, ensemble orchestration, and file
//! output around the `dkh-core` solvers.

pub mod config;
pub mod output;
pub mod runner;
pub mod scenario;

pub use config::{DtSpec, Method, Scenario, SimConfig};
pub use runner::{run_to_dir, RunAggregates};
