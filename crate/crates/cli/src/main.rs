use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use ccnsim_cli::run::{csv_bytes, ATTACK_HEADER, METRICS_HEADER};
use ccnsim_cli::scenario::scenario_text;
use ccnsim_cli::{corpus, expand, load_scenario, parse_grid, parse_seeds, run_config, run_sweep, write_outputs, RunOptions};

/// Deterministic CCN security simulator.
///
/// Scenario paths may also be `bundled:<id>` (see `ccnsim list`).
/// Log verbosity follows CCNSIM_LOG (error, warn, info, debug, trace).
#[derive(Parser)]
#[command(name = "ccnsim", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one scenario and write metrics.csv, attack_results.csv and optionally trace.log.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// Overrides the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the scenario's end time, in ms.
        #[arg(long)]
        until: Option<f64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        trace: bool,
    },
    /// Parse and validate a scenario without running it.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Run the Cartesian product of a parameter grid and a seed range.
    Sweep {
        #[arg(long)]
        scenario: PathBuf,
        /// TOML file with a [grid] table of dotted paths to value lists.
        #[arg(long)]
        grid: Option<PathBuf>,
        /// `a..b`, `a..=b` or a single seed.
        #[arg(long, default_value = "1")]
        seeds: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// List the bundled scenarios.
    List,
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CCNSIM_LOG", "warn")).init();
    match Cli::parse().cmd {
        Cmd::Run { scenario, seed, until, out, trace } => {
            let cfg = load_scenario(&scenario).with_context(|| format!("loading {}", scenario.display()))?;
            if until.is_some_and(|u| !(u.is_finite() && u >= 0.0)) {
                bail!("--until must be a non-negative number of ms");
            }
            let output = run_config(&cfg, &cfg.id, &RunOptions { seed, until_ms: until, trace })?;
            write_outputs(&output, &out)?;
            log::info!("wrote {} metric rows to {}", output.metrics.len(), out.display());
        }
        Cmd::Validate { scenario } => {
            let cfg = load_scenario(&scenario).with_context(|| format!("validating {}", scenario.display()))?;
            println!("{}: ok ({} nodes)", cfg.id, cfg.node_names().len());
        }
        Cmd::Sweep { scenario, grid, seeds, out } => {
            let text = scenario_text(&scenario)?;
            if text.trim().is_empty() {
                bail!("{}: scenario file is empty", scenario.display());
            }
            let base: toml::Value = toml::from_str(&text).with_context(|| format!("parsing {}", scenario.display()))?;
            let grid = match grid {
                Some(p) => parse_grid(&fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?)?,
                None => Vec::new(),
            };
            let seeds = parse_seeds(&seeds)?;
            let cells = expand(&base, &grid)?;
            log::info!("{} cells x {} seeds", cells.len(), seeds.clone().count());
            let result = run_sweep(&cells, seeds)?;
            fs::create_dir_all(&out)?;
            fs::write(out.join("metrics.csv"), csv_bytes(METRICS_HEADER, &result.metrics)?)?;
            fs::write(out.join("attack_results.csv"), csv_bytes(ATTACK_HEADER, &result.attacks)?)?;
            println!("{} runs, {} metric rows", result.cells, result.metrics.len());
        }
        Cmd::List => {
            for id in corpus::ids() {
                println!("{id}");
            }
        }
    }
    Ok(())
}
