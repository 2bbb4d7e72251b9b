//! Batch front end for the simulator: TOML scenarios in, long-format CSV out.

pub mod build;
pub mod corpus;
pub mod run;
pub mod scenario;
pub mod sweep;

pub use build::build_engine;
pub use run::{run_config, write_outputs, AttackRecord, MetricRecord, RunError, RunOptions, RunOutput};
pub use scenario::{load_scenario, ScenarioConfig, ScenarioError};
pub use sweep::{expand, parse_grid, parse_seeds, run_sweep, SweepError};
