//! Parameter sweeps: grid × seeds, one isolated engine per cell.
//!
//! A grid file is TOML with a single `[grid]` table mapping dotted parameter
//! paths to value lists, e.g. `"routers.r1.per_domain_limit" = ["inf", 100]`.
//! Path segments that meet an array select an element by its `name` field or
//! by index.

use std::collections::BTreeMap;
use std::ops::RangeInclusive;

use rayon::prelude::*;
use serde::Deserialize;

use crate::run::{run_config, AttackRecord, MetricRecord, RunError, RunOptions};
use crate::scenario::{ScenarioConfig, ScenarioError};

#[derive(Debug, thiserror::Error)]
pub enum SweepError {
    #[error("grid file: {0}")]
    Grid(String),
    #[error("unknown parameter path {path:?}: {reason}")]
    UnknownPath { path: String, reason: String },
    #[error("cell {cell}: {source}")]
    Cell { cell: String, source: ScenarioError },
    #[error("bad seed range {0:?} (expected a..b, a..=b or n)")]
    Seeds(String),
    #[error(transparent)]
    Run(#[from] RunError),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridFile {
    #[serde(default)]
    grid: BTreeMap<String, Vec<toml::Value>>,
}

/// Parameter → candidate values, in file order of keys (sorted).
pub type Grid = Vec<(String, Vec<toml::Value>)>;

pub fn parse_grid(text: &str) -> Result<Grid, SweepError> {
    let g: GridFile = toml::from_str(text).map_err(|e| SweepError::Grid(e.to_string()))?;
    for (k, v) in &g.grid {
        if v.is_empty() {
            return Err(SweepError::Grid(format!("{k}: empty value list")));
        }
    }
    Ok(g.grid.into_iter().collect())
}

/// `a..b` (exclusive), `a..=b` (inclusive) or a single seed.
pub fn parse_seeds(text: &str) -> Result<RangeInclusive<u64>, SweepError> {
    let bad = || SweepError::Seeds(text.to_string());
    let num = |s: &str| s.trim().parse::<u64>().map_err(|_| bad());
    if let Some((a, b)) = text.split_once("..=") {
        let (a, b) = (num(a)?, num(b)?);
        return if a <= b { Ok(a..=b) } else { Err(bad()) };
    }
    if let Some((a, b)) = text.split_once("..") {
        let (a, b) = (num(a)?, num(b)?);
        return if a < b { Ok(a..=b - 1) } else { Err(bad()) };
    }
    let n = num(text)?;
    Ok(n..=n)
}

fn value_text(v: &toml::Value) -> String {
    match v {
        toml::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Sets `path` inside `doc` to `value`. Array elements must exist; missing
/// table fields are created.
pub fn set_path(doc: &mut toml::Value, path: &str, value: toml::Value) -> Result<(), SweepError> {
    let unknown = |reason: String| SweepError::UnknownPath { path: path.to_string(), reason };
    let segments: Vec<&str> = path.split('.').collect();
    if segments.iter().any(|s| s.is_empty()) {
        return Err(unknown("empty segment".into()));
    }
    let mut cur = doc;
    for (i, seg) in segments.iter().enumerate() {
        let last = i + 1 == segments.len();
        cur = match cur {
            toml::Value::Array(items) => {
                let pos = match seg.parse::<usize>() {
                    Ok(ix) if ix < items.len() => Some(ix),
                    _ => items.iter().position(|it| it.get("name").and_then(|n| n.as_str()) == Some(seg)),
                };
                let ix = pos.ok_or_else(|| unknown(format!("no element {seg:?}")))?;
                if last {
                    items[ix] = value;
                    return Ok(());
                }
                &mut items[ix]
            }
            toml::Value::Table(t) => {
                if last {
                    t.insert(seg.to_string(), value);
                    return Ok(());
                }
                // absent sub-tables are at their defaults; the schema check
                // afterwards rejects names that are not fields
                t.entry(seg.to_string()).or_insert_with(|| toml::Value::Table(Default::default()))
            }
            _ => return Err(unknown(format!("{seg:?} is below a scalar"))),
        };
    }
    unreachable!("loop returns on the last segment")
}

#[derive(Clone, Debug)]
pub struct Cell {
    pub id: String,
    pub config: ScenarioConfig,
}

/// Expands the Cartesian product of `grid` over the base document and
/// validates every cell. An empty grid yields the base scenario alone.
pub fn expand(base: &toml::Value, grid: &Grid) -> Result<Vec<Cell>, SweepError> {
    let base_id = base.get("id").and_then(|v| v.as_str()).unwrap_or("scenario").to_string();
    let mut combos: Vec<Vec<(String, toml::Value)>> = vec![Vec::new()];
    for (path, values) in grid {
        combos = combos
            .into_iter()
            .flat_map(|c| {
                values.iter().map(move |v| {
                    let mut c = c.clone();
                    c.push((path.clone(), v.clone()));
                    c
                })
            })
            .collect();
    }
    combos
        .into_iter()
        .map(|combo| {
            let mut doc = base.clone();
            for (p, v) in &combo {
                set_path(&mut doc, p, v.clone())?;
            }
            let id = if combo.is_empty() {
                base_id.clone()
            } else {
                let parts: Vec<String> = combo.iter().map(|(p, v)| format!("{p}={}", value_text(v))).collect();
                format!("{base_id}[{}]", parts.join(","))
            };
            let config = ScenarioConfig::from_value(doc).map_err(|source| SweepError::Cell { cell: id.clone(), source })?;
            Ok(Cell { id, config })
        })
        .collect()
}

#[derive(Clone, Debug, Default)]
pub struct SweepOutput {
    pub metrics: Vec<MetricRecord>,
    pub attacks: Vec<AttackRecord>,
    pub cells: usize,
}

/// Runs every (cell, seed) pair in parallel and merges the rows in cell,
/// then seed, order.
pub fn run_sweep(cells: &[Cell], seeds: RangeInclusive<u64>) -> Result<SweepOutput, SweepError> {
    let jobs: Vec<(&Cell, u64)> = cells.iter().flat_map(|c| seeds.clone().map(move |s| (c, s))).collect();
    let results: Vec<_> = jobs
        .par_iter()
        .map(|(cell, seed)| run_config(&cell.config, &cell.id, &RunOptions { seed: Some(*seed), ..Default::default() }))
        .collect();
    let mut out = SweepOutput { cells: jobs.len(), ..Default::default() };
    for r in results {
        let r = r?;
        out.metrics.extend(r.metrics);
        out.attacks.extend(r.attacks);
    }
    Ok(out)
}
