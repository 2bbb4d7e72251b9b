//! Running a scenario and writing its long-format CSV outputs.

use std::fs;
use std::io::Write;
use std::path::Path;

use ccnsim::engine::EngineError;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::build::{at, build_engine};
use crate::scenario::ScenarioConfig;

pub const METRICS_HEADER: &str = "scenario_id,seed,entity,metric,value";
pub const ATTACK_HEADER: &str = "scenario_id,seed,node,variant,param_hash,metric,value,aux";

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("simulation failed: {0}")]
    Engine(#[from] EngineError),
    #[error("cannot write {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricRecord {
    pub scenario_id: String,
    pub seed: u64,
    pub entity: String,
    pub metric: String,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AttackRecord {
    pub scenario_id: String,
    pub seed: u64,
    pub node: String,
    pub variant: String,
    /// First 16 hex digits of SHA-256 over the variant and its parameters.
    pub param_hash: String,
    pub metric: String,
    pub value: f64,
    /// `key=value` pairs joined by `;`.
    pub aux: String,
}

#[derive(Clone, Debug, Default)]
pub struct RunOutput {
    pub metrics: Vec<MetricRecord>,
    pub attacks: Vec<AttackRecord>,
    /// Trace lines, when requested.
    pub trace: Option<Vec<String>>,
    pub trace_digest: Option<String>,
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub until_ms: Option<f64>,
    pub trace: bool,
}

pub fn param_hash(variant: &str, params: &str) -> String {
    let mut h = Sha256::new();
    h.update(variant.as_bytes());
    h.update(b"\n");
    h.update(params.as_bytes());
    hex::encode(h.finalize())[..16].to_string()
}

/// Runs `cfg` to its end time (or `opts.until_ms`) under `id`.
pub fn run_config(cfg: &ScenarioConfig, id: &str, opts: &RunOptions) -> Result<RunOutput, RunError> {
    let seed = opts.seed.unwrap_or(cfg.seed);
    let mut engine = build_engine(cfg, seed)?;
    if opts.trace {
        engine.enable_trace(true);
    }
    let t_end = at(opts.until_ms.unwrap_or(cfg.t_end_ms));
    log::info!("running {id} seed {seed} until {t_end}");
    engine.run_until(t_end)?;
    log::debug!("{id}: {} events", engine.events_processed());

    let metrics = engine
        .metrics()
        .rows
        .into_iter()
        .map(|r| MetricRecord { scenario_id: id.to_string(), seed, entity: r.entity, metric: r.metric, value: r.value })
        .collect();
    let attacks = engine
        .attack_results()
        .into_iter()
        .map(|(node, a)| AttackRecord {
            scenario_id: id.to_string(),
            seed,
            node,
            param_hash: param_hash(&a.variant, &a.params),
            variant: a.variant,
            metric: a.metric,
            value: a.value,
            aux: a.aux.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(";"),
        })
        .collect();
    let (trace, trace_digest) = match engine.trace() {
        Some(t) => (Some(t.lines().to_vec()), Some(t.digest())),
        None => (None, None),
    };
    Ok(RunOutput { metrics, attacks, trace, trace_digest })
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io { path: path.display().to_string(), source }
}

/// Serializes `rows` under `header`; the header is written even for no rows.
pub fn csv_bytes<T: Serialize>(header: &str, rows: &[T]) -> Result<Vec<u8>, RunError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(header.split(','))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| RunError::Io { path: "<memory>".into(), source: e.into_error() })
}

/// Writes metrics.csv, attack_results.csv and (if present) trace.log.
pub fn write_outputs(out: &RunOutput, dir: &Path) -> Result<(), RunError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let p = dir.join("metrics.csv");
    fs::write(&p, csv_bytes(METRICS_HEADER, &out.metrics)?).map_err(io_err(&p))?;
    let p = dir.join("attack_results.csv");
    fs::write(&p, csv_bytes(ATTACK_HEADER, &out.attacks)?).map_err(io_err(&p))?;
    if let Some(lines) = &out.trace {
        let p = dir.join("trace.log");
        let mut f = std::io::BufWriter::new(fs::File::create(&p).map_err(io_err(&p))?);
        for l in lines {
            writeln!(f, "{l}").map_err(io_err(&p))?;
        }
        f.flush().map_err(io_err(&p))?;
    }
    Ok(())
}
