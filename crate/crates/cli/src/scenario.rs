//! Versioned TOML scenario schema and its validation.
//!
//! Durations are milliseconds as floats so that a negative value can be
//! reported precisely instead of failing to parse.

use std::collections::BTreeSet;
use std::path::Path;

use ccnsim::names::Name;
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("scenario file is empty")]
    Empty,
    #[error("schema error: {0}")]
    Schema(String),
    #[error("unsupported schema_version {0} (expected {SCHEMA_VERSION})")]
    Version(u32),
    #[error("{field}: {message}")]
    Invalid { field: String, message: String },
    #[error("unknown bundled scenario {0:?}")]
    UnknownBundled(String),
}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid { field: field.into(), message: message.into() }
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    pub id: String,
    #[serde(default = "one")]
    pub seed: u64,
    pub t_end_ms: f64,
    /// Counters are zeroed at this time; everything before is warm-up.
    #[serde(default)]
    pub warmup_ms: f64,
    /// PIT occupancy sampling period.
    #[serde(default = "hundred")]
    pub sample_ms: f64,
    #[serde(default = "yes")]
    pub auto_route: bool,
    #[serde(default)]
    pub routers: Vec<RouterSpec>,
    #[serde(default)]
    pub producers: Vec<ProducerSpec>,
    #[serde(default)]
    pub consumers: Vec<ConsumerSpec>,
    #[serde(default)]
    pub links: Vec<LinkSpec>,
    #[serde(default)]
    pub routes: Vec<RouteSpec>,
    #[serde(default)]
    pub attacks: Vec<AttackSpec>,
    #[serde(default)]
    pub blacklists: Vec<BlacklistSpec>,
    pub overlay: Option<OverlaySpec>,
}

fn one() -> u64 {
    1
}
fn hundred() -> f64 {
    100.0
}
fn yes() -> bool {
    true
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RouterSpec {
    pub name: String,
    #[serde(default)]
    pub cache: CacheSpec,
    #[serde(default)]
    pub verify_signatures: bool,
    #[serde(default = "verify_cost")]
    pub verify_cost_us: f64,
    #[serde(default = "yes")]
    pub honor_no_cache: bool,
    #[serde(default = "yes")]
    pub allow_non_invasive: bool,
    #[serde(default = "yes")]
    pub allow_exclude: bool,
    #[serde(default = "yes")]
    pub allow_chunk_requests: bool,
    #[serde(default = "two_s")]
    pub chunk_window_ms: f64,
    #[serde(default)]
    pub hit_delay: DelayMs,
    /// Interests per second per name domain, or "inf".
    #[serde(default)]
    pub per_domain_limit: Limit,
    /// Bucket depth; one second's worth when absent.
    pub per_domain_burst: Option<f64>,
    pub pit_capacity: Option<usize>,
    #[serde(default = "four_s")]
    pub pit_timeout_ms: f64,
    /// Producers whose signed data this router drops.
    #[serde(default)]
    pub censor: Vec<String>,
    pub detectors: Option<DetectorSpec>,
    pub revalidate_every_ms: Option<f64>,
}

fn verify_cost() -> f64 {
    50.0
}
fn two_s() -> f64 {
    2000.0
}
fn four_s() -> f64 {
    4000.0
}

#[derive(Clone, Copy, Debug, Default, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DelayMs {
    #[serde(default)]
    pub min_ms: f64,
    #[serde(default)]
    pub jitter_ms: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub enum Limit {
    #[default]
    Unlimited,
    Rate(f64),
}

impl<'de> Deserialize<'de> for Limit {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(x) => Ok(Limit::Rate(x)),
            Raw::Text(s) if matches!(s.as_str(), "inf" | "infinity" | "none") => Ok(Limit::Unlimited),
            Raw::Text(s) => Err(serde::de::Error::custom(format!("expected a rate or \"inf\", got {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    Lru,
    Fifo,
    Random,
    Popularity,
}

/// Cache-entry lifetime: a fixed number of ms or a `[lo, hi]` uniform range.
#[derive(Clone, Copy, Debug, Deserialize, Serialize, PartialEq)]
#[serde(untagged)]
pub enum LifetimeMs {
    Fixed(f64),
    Range([f64; 2]),
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CacheSpec {
    #[serde(default = "hundred_usize")]
    pub capacity: usize,
    #[serde(default = "lru")]
    pub policy: Policy,
    /// Absent means entries never expire.
    pub lifetime_ms: Option<LifetimeMs>,
    #[serde(default = "two")]
    pub popularity_k: u32,
    #[serde(default = "ten_s")]
    pub popularity_window_ms: f64,
    #[serde(default)]
    pub record_removals: bool,
}

fn hundred_usize() -> usize {
    100
}
fn lru() -> Policy {
    Policy::Lru
}
fn two() -> u32 {
    2
}
fn ten_s() -> f64 {
    10_000.0
}

impl Default for CacheSpec {
    fn default() -> Self {
        CacheSpec {
            capacity: 100,
            policy: Policy::Lru,
            lifetime_ms: None,
            popularity_k: 2,
            popularity_window_ms: 10_000.0,
            record_removals: false,
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DetectorSpec {
    #[serde(default = "thirty_s")]
    pub window_ms: f64,
    #[serde(default = "one_s")]
    pub interval_ms: f64,
    pub periodicity: Option<PeriodicitySpec>,
    pub hit_rate: Option<HitRateSpec>,
    pub exclude: Option<ExcludeSpec>,
    pub pollution: Option<PollutionSpec>,
    pub response: Option<ResponseSpec>,
}

fn thirty_s() -> f64 {
    30_000.0
}
fn one_s() -> f64 {
    1000.0
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PeriodicitySpec {
    pub min_repeats: Option<usize>,
    pub cv_max: Option<f64>,
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct HitRateSpec {
    pub max: Option<f64>,
    pub min_lookups: Option<usize>,
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExcludeSpec {
    pub max_fraction: Option<f64>,
    pub min_interests: Option<usize>,
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PollutionSpec {
    pub share_max: Option<f64>,
    pub hit_rate_max: Option<f64>,
    pub min_lookups: Option<usize>,
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum ResponseSpec {
    IgnoreForCaching,
    DropInterests,
    BlacklistProducer,
}

#[derive(Clone, Copy, Debug, Default, Deserialize, Serialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum KeyModeSpec {
    #[default]
    LongLived,
    Ephemeral,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ProducerSpec {
    pub name: String,
    pub prefix: String,
    #[serde(default)]
    pub key_mode: KeyModeSpec,
    #[serde(default = "service")]
    pub service: DelayMs,
    #[serde(default = "payload")]
    pub payload_size: usize,
    pub chunking: Option<ChunkingSpec>,
    #[serde(default)]
    pub no_cache: bool,
    /// Deliberately slow answers (a colluding origin).
    pub colluding_slow_ms: Option<f64>,
    pub conversation: Option<ConversationSpec>,
}

fn service() -> DelayMs {
    DelayMs { min_ms: 5.0, jitter_ms: 0.0 }
}
fn payload() -> usize {
    1024
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize, PartialEq, Eq)]
#[serde(deny_unknown_fields)]
pub struct ChunkingSpec {
    pub object_size: usize,
    pub chunk_size: usize,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ConversationSpec {
    /// Defaults to the producer prefix.
    pub prefix: Option<String>,
    pub messages: u32,
    #[serde(default)]
    pub start_ms: f64,
    pub interval_ms: f64,
    #[serde(default)]
    pub opaque: bool,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProcessSpec {
    Poisson { rate: f64 },
    Periodic { interval_ms: f64 },
    Schedule { at_ms: Vec<f64> },
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NamesSpec {
    Fixed { name: String },
    Zipf { prefix: String, catalog: u64, alpha: f64 },
    Uniform { prefix: String, catalog: u64 },
    Sequence { names: Vec<String> },
    Unique { prefix: String },
    Chunks { base: String, total: u32 },
    /// The conversation published by `producer`.
    Conversation { producer: String },
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ConsumerSpec {
    pub name: String,
    pub process: ProcessSpec,
    pub names: NamesSpec,
    #[serde(default)]
    pub start_ms: f64,
    pub stop_ms: Option<f64>,
    pub max_requests: Option<u64>,
    #[serde(default = "four_s")]
    pub timeout_ms: f64,
    #[serde(default)]
    pub no_cache_request: bool,
    #[serde(default)]
    pub use_exclude: bool,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct LinkSpec {
    pub a: String,
    pub b: String,
    pub delay_ms: f64,
    #[serde(default)]
    pub loss: f64,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RouteSpec {
    pub router: String,
    pub prefix: String,
    /// A direct neighbor of `router`.
    pub via: String,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct BlacklistSpec {
    pub at_ms: f64,
    pub origin: String,
    pub names: Vec<String>,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct OverlaySpec {
    pub relays: Vec<RelaySpec>,
    #[serde(default)]
    pub consumers: Vec<OverlayConsumerSpec>,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RelaySpec {
    pub name: String,
    pub prefix: String,
    pub router: String,
    #[serde(default = "one_ms")]
    pub delay_ms: f64,
    #[serde(default)]
    pub processing_ms: f64,
}

fn one_ms() -> f64 {
    1.0
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct OverlayConsumerSpec {
    pub name: String,
    pub router: String,
    #[serde(default = "one_ms")]
    pub delay_ms: f64,
    pub requests: Vec<TimedName>,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TimedName {
    pub at_ms: f64,
    pub name: String,
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum FloodKind {
    SameName,
    DistinctNames,
    Nonexistent,
    Collusion,
}

#[derive(Clone, Copy, Debug, Default, Deserialize, Serialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum ProbeModeSpec {
    #[default]
    Sequential,
    Parallel,
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum PoisonModeSpec {
    Tampered,
    Unverifiable,
}

/// Adversaries. Each one except `poison` is an endpoint attached to an edge
/// router (`edge`, or one bot per entry of `edges`).
#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AttackSpec {
    Enumerate {
        name: Option<String>,
        edge: String,
        prefix: String,
        #[serde(default = "enum_limit")]
        limit: usize,
        #[serde(default)]
        start_ms: f64,
        #[serde(default = "hundred")]
        miss_timeout_ms: f64,
    },
    Timing {
        name: Option<String>,
        edge: String,
        target: String,
        #[serde(default)]
        mode: ProbeModeSpec,
        #[serde(default = "one_u32")]
        chunks: u32,
        /// A non-first chunk of an uncached object, to test chunk filtering.
        check: Option<String>,
        t_c_ms: f64,
        epsilon_ms: f64,
        hit_ms: f64,
        miss_ms: f64,
        #[serde(default)]
        start_ms: f64,
        until_ms: f64,
        #[serde(default = "one_s")]
        timeout_ms: f64,
    },
    Clone {
        name: Option<String>,
        edge: String,
        prefix: String,
        #[serde(default)]
        start_ms: f64,
        until_ms: f64,
    },
    Flood {
        name: Option<String>,
        edges: Vec<String>,
        variant: FloodKind,
        prefix: String,
        rate: f64,
        #[serde(default)]
        start_ms: f64,
        stop_ms: Option<f64>,
        #[serde(default = "four_s")]
        timeout_ms: f64,
        #[serde(default)]
        poisson: bool,
    },
    Pollution {
        name: Option<String>,
        edges: Vec<String>,
        prefix: String,
        /// Junk drawn from this many names; unique names when absent.
        catalog: Option<u64>,
        rate: f64,
        #[serde(default)]
        start_ms: f64,
        stop_ms: Option<f64>,
    },
    Poison {
        router: String,
        prefix: String,
        mode: PoisonModeSpec,
    },
    TcEstimate {
        name: Option<String>,
        edge: String,
        prefix: String,
        #[serde(default)]
        start_ms: f64,
        initial_gap_ms: Option<f64>,
        precision: Option<f64>,
        max_gap_ms: Option<f64>,
        repetitions: Option<usize>,
    },
    Classifier {
        name: Option<String>,
        edge: String,
        prefix: String,
        #[serde(default)]
        start_ms: f64,
        #[serde(default = "ten_usize")]
        calibration_samples: usize,
        trials: usize,
    },
}

fn enum_limit() -> usize {
    1000
}
fn one_u32() -> u32 {
    1
}
fn ten_usize() -> usize {
    10
}

impl AttackSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            AttackSpec::Enumerate { .. } => "enumerate",
            AttackSpec::Timing { .. } => "timing",
            AttackSpec::Clone { .. } => "clone",
            AttackSpec::Flood { .. } => "flood",
            AttackSpec::Pollution { .. } => "pollution",
            AttackSpec::Poison { .. } => "poison",
            AttackSpec::TcEstimate { .. } => "tc_estimate",
            AttackSpec::Classifier { .. } => "classifier",
        }
    }

    pub fn label(&self) -> Option<&str> {
        match self {
            AttackSpec::Enumerate { name, .. }
            | AttackSpec::Timing { name, .. }
            | AttackSpec::Clone { name, .. }
            | AttackSpec::Flood { name, .. }
            | AttackSpec::Pollution { name, .. }
            | AttackSpec::TcEstimate { name, .. }
            | AttackSpec::Classifier { name, .. } => name.as_deref(),
            AttackSpec::Poison { .. } => None,
        }
    }

    /// Edge routers the attack's endpoints hang off.
    pub fn edges(&self) -> Vec<&str> {
        match self {
            AttackSpec::Enumerate { edge, .. }
            | AttackSpec::Timing { edge, .. }
            | AttackSpec::Clone { edge, .. }
            | AttackSpec::TcEstimate { edge, .. }
            | AttackSpec::Classifier { edge, .. } => vec![edge.as_str()],
            AttackSpec::Flood { edges, .. } | AttackSpec::Pollution { edges, .. } => {
                edges.iter().map(String::as_str).collect()
            }
            AttackSpec::Poison { router, .. } => vec![router.as_str()],
        }
    }

    /// Node names this attack adds, in creation order.
    pub fn node_names(&self, index: usize) -> Vec<String> {
        if matches!(self, AttackSpec::Poison { .. }) {
            return Vec::new();
        }
        let base = self.label().map_or_else(|| format!("{}{index}", self.kind()), str::to_string);
        let edges = self.edges();
        if edges.len() == 1 && !matches!(self, AttackSpec::Flood { .. } | AttackSpec::Pollution { .. }) {
            return vec![base];
        }
        (0..edges.len()).map(|i| format!("{base}-{i}")).collect()
    }
}

impl ScenarioConfig {
    /// Parses and validates TOML text.
    pub fn from_toml(text: &str) -> Result<Self, ScenarioError> {
        if text.trim().is_empty() {
            return Err(ScenarioError::Empty);
        }
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| ScenarioError::Schema(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Like [`from_toml`](Self::from_toml) for an already parsed document.
    pub fn from_value(value: toml::Value) -> Result<Self, ScenarioError> {
        let cfg: ScenarioConfig = value.try_into().map_err(|e: toml::de::Error| ScenarioError::Schema(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Every node name in creation order: routers, producers, consumers,
    /// relays, overlay consumers, then attack endpoints.
    pub fn node_names(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        out.extend(self.routers.iter().map(|r| r.name.clone()));
        out.extend(self.producers.iter().map(|p| p.name.clone()));
        out.extend(self.consumers.iter().map(|c| c.name.clone()));
        if let Some(o) = &self.overlay {
            out.extend(o.relays.iter().map(|r| r.name.clone()));
            out.extend(o.consumers.iter().map(|c| c.name.clone()));
        }
        for (i, a) in self.attacks.iter().enumerate() {
            out.extend(a.node_names(i));
        }
        out
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(ScenarioError::Version(self.schema_version));
        }
        if self.id.trim().is_empty() {
            return Err(invalid("id", "must not be empty"));
        }
        positive("t_end_ms", self.t_end_ms)?;
        non_negative("warmup_ms", self.warmup_ms)?;
        positive("sample_ms", self.sample_ms)?;

        let mut seen = BTreeSet::new();
        for n in self.node_names() {
            if n.is_empty() {
                return Err(invalid("name", "node names must not be empty"));
            }
            if !seen.insert(n.clone()) {
                return Err(invalid("name", format!("duplicate node {n:?}")));
            }
        }
        let routers: BTreeSet<&str> = self.routers.iter().map(|r| r.name.as_str()).collect();
        let producers: BTreeSet<&str> = self.producers.iter().map(|p| p.name.as_str()).collect();
        let node = |field: &str, n: &str| -> Result<(), ScenarioError> {
            if seen.contains(n) {
                Ok(())
            } else {
                Err(invalid(field, format!("unknown node {n:?}")))
            }
        };
        let router = |field: &str, n: &str| -> Result<(), ScenarioError> {
            node(field, n)?;
            if routers.contains(n) {
                Ok(())
            } else {
                Err(invalid(field, format!("{n:?} is not a router")))
            }
        };

        for (i, r) in self.routers.iter().enumerate() {
            let f = |s: &str| format!("routers[{}].{s}", r.name);
            non_negative(&f("verify_cost_us"), r.verify_cost_us)?;
            non_negative(&f("chunk_window_ms"), r.chunk_window_ms)?;
            delay(&f("hit_delay"), r.hit_delay)?;
            positive(&f("pit_timeout_ms"), r.pit_timeout_ms)?;
            if let Limit::Rate(x) = r.per_domain_limit {
                positive(&f("per_domain_limit"), x)?;
            }
            if let Some(b) = r.per_domain_burst {
                positive(&f("per_domain_burst"), b)?;
            }
            for (j, p) in r.censor.iter().enumerate() {
                if !producers.contains(p.as_str()) {
                    return Err(invalid(format!("routers[{i}].censor[{j}]"), format!("unknown producer {p:?}")));
                }
            }
            match r.cache.lifetime_ms {
                Some(LifetimeMs::Fixed(x)) => positive(&f("cache.lifetime_ms"), x)?,
                Some(LifetimeMs::Range([lo, hi])) => {
                    positive(&f("cache.lifetime_ms"), lo)?;
                    if hi < lo {
                        return Err(invalid(f("cache.lifetime_ms"), "range upper bound below lower bound"));
                    }
                }
                None => {}
            }
            positive(&f("cache.popularity_window_ms"), r.cache.popularity_window_ms)?;
            if let Some(d) = &r.detectors {
                positive(&f("detectors.window_ms"), d.window_ms)?;
                positive(&f("detectors.interval_ms"), d.interval_ms)?;
                crate::build::detector_config(d).validate().map_err(|e| invalid(f("detectors"), e.to_string()))?;
            }
            if let Some(x) = r.revalidate_every_ms {
                positive(&f("revalidate_every_ms"), x)?;
            }
        }

        for p in &self.producers {
            let f = |s: &str| format!("producers[{}].{s}", p.name);
            name(&f("prefix"), &p.prefix)?;
            delay(&f("service"), p.service)?;
            if let Some(c) = p.chunking {
                if c.chunk_size == 0 || c.object_size == 0 {
                    return Err(invalid(f("chunking"), "sizes must be positive"));
                }
            }
            if let Some(x) = p.colluding_slow_ms {
                non_negative(&f("colluding_slow_ms"), x)?;
            }
            if let Some(c) = &p.conversation {
                non_negative(&f("conversation.start_ms"), c.start_ms)?;
                positive(&f("conversation.interval_ms"), c.interval_ms)?;
                if let Some(cp) = &c.prefix {
                    let cp = name(&f("conversation.prefix"), cp)?;
                    if !Name::parse(&p.prefix).expect("checked").is_prefix_of(&cp) {
                        return Err(invalid(f("conversation.prefix"), "must lie under the producer prefix"));
                    }
                }
            }
        }

        for c in &self.consumers {
            let f = |s: &str| format!("consumers[{}].{s}", c.name);
            match &c.process {
                ProcessSpec::Poisson { rate } => non_negative(&f("process.rate"), *rate)?,
                ProcessSpec::Periodic { interval_ms } => positive(&f("process.interval_ms"), *interval_ms)?,
                ProcessSpec::Schedule { at_ms } => {
                    for t in at_ms {
                        non_negative(&f("process.at_ms"), *t)?;
                    }
                    if at_ms.windows(2).any(|w| w[1] < w[0]) {
                        return Err(invalid(f("process.at_ms"), "times must be non-decreasing"));
                    }
                }
            }
            match &c.names {
                NamesSpec::Fixed { name: n } => drop(name(&f("names.name"), n)?),
                NamesSpec::Zipf { prefix, catalog, alpha } => {
                    name(&f("names.prefix"), prefix)?;
                    if *catalog == 0 {
                        return Err(invalid(f("names.catalog"), "must be positive"));
                    }
                    positive(&f("names.alpha"), *alpha)?;
                }
                NamesSpec::Uniform { prefix, catalog } => {
                    name(&f("names.prefix"), prefix)?;
                    if *catalog == 0 {
                        return Err(invalid(f("names.catalog"), "must be positive"));
                    }
                }
                NamesSpec::Sequence { names } => {
                    for n in names {
                        name(&f("names.names"), n)?;
                    }
                }
                NamesSpec::Unique { prefix } => drop(name(&f("names.prefix"), prefix)?),
                NamesSpec::Chunks { base, total } => {
                    name(&f("names.base"), base)?;
                    if *total == 0 {
                        return Err(invalid(f("names.total"), "must be positive"));
                    }
                }
                NamesSpec::Conversation { producer } => {
                    let p = self.producers.iter().find(|p| &p.name == producer);
                    match p {
                        None => return Err(invalid(f("names.producer"), format!("unknown producer {producer:?}"))),
                        Some(p) if p.conversation.is_none() => {
                            return Err(invalid(f("names.producer"), format!("{producer:?} publishes no conversation")))
                        }
                        Some(_) => {}
                    }
                }
            }
            non_negative(&f("start_ms"), c.start_ms)?;
            if let Some(s) = c.stop_ms {
                non_negative(&f("stop_ms"), s)?;
            }
            positive(&f("timeout_ms"), c.timeout_ms)?;
        }

        let mut pairs = BTreeSet::new();
        for (i, l) in self.links.iter().enumerate() {
            let f = |s: &str| format!("links[{i}].{s}");
            node(&f("a"), &l.a)?;
            node(&f("b"), &l.b)?;
            if l.a == l.b {
                return Err(invalid(f("b"), format!("self loop on {:?}", l.a)));
            }
            non_negative(&f("delay_ms"), l.delay_ms)?;
            if !(0.0..=1.0).contains(&l.loss) {
                return Err(invalid(f("loss"), format!("{} outside [0, 1]", l.loss)));
            }
            let key = if l.a < l.b { (&l.a, &l.b) } else { (&l.b, &l.a) };
            if !pairs.insert(key) {
                return Err(invalid(f("b"), format!("duplicate link {}-{}", l.a, l.b)));
            }
        }
        let adjacent = |a: &str, b: &str| self.links.iter().any(|l| (l.a == a && l.b == b) || (l.a == b && l.b == a));

        for (i, r) in self.routes.iter().enumerate() {
            let f = |s: &str| format!("routes[{i}].{s}");
            router(&f("router"), &r.router)?;
            node(&f("via"), &r.via)?;
            name(&f("prefix"), &r.prefix)?;
            if !adjacent(&r.router, &r.via) {
                return Err(invalid(f("via"), format!("{:?} is not adjacent to {:?}", r.via, r.router)));
            }
        }

        for (i, b) in self.blacklists.iter().enumerate() {
            let f = |s: &str| format!("blacklists[{i}].{s}");
            non_negative(&f("at_ms"), b.at_ms)?;
            router(&f("origin"), &b.origin)?;
            for n in &b.names {
                name(&f("names"), n)?;
            }
        }

        if let Some(o) = &self.overlay {
            if o.relays.len() < 2 {
                return Err(invalid("overlay.relays", "a circuit needs at least two relays"));
            }
            for r in &o.relays {
                let f = |s: &str| format!("overlay.relays[{}].{s}", r.name);
                name(&f("prefix"), &r.prefix)?;
                router(&f("router"), &r.router)?;
                non_negative(&f("delay_ms"), r.delay_ms)?;
                non_negative(&f("processing_ms"), r.processing_ms)?;
            }
            for c in &o.consumers {
                let f = |s: &str| format!("overlay.consumers[{}].{s}", c.name);
                router(&f("router"), &c.router)?;
                non_negative(&f("delay_ms"), c.delay_ms)?;
                for t in &c.requests {
                    non_negative(&f("requests.at_ms"), t.at_ms)?;
                    name(&f("requests.name"), &t.name)?;
                }
            }
        }

        for (i, a) in self.attacks.iter().enumerate() {
            let f = |s: &str| format!("attacks[{i}].{s}");
            let edge_field = if matches!(a, AttackSpec::Poison { .. }) {
                "router"
            } else if matches!(a, AttackSpec::Flood { .. } | AttackSpec::Pollution { .. }) {
                "edges"
            } else {
                "edge"
            };
            if a.edges().is_empty() {
                return Err(invalid(f(edge_field), "needs at least one router"));
            }
            for e in a.edges() {
                router(&f(edge_field), e)?;
            }
            match a {
                AttackSpec::Enumerate { prefix, start_ms, miss_timeout_ms, .. } => {
                    name(&f("prefix"), prefix)?;
                    non_negative(&f("start_ms"), *start_ms)?;
                    positive(&f("miss_timeout_ms"), *miss_timeout_ms)?;
                }
                AttackSpec::Timing {
                    target, mode, chunks, check, t_c_ms, epsilon_ms, hit_ms, miss_ms, start_ms, until_ms, timeout_ms, ..
                } => {
                    name(&f("target"), target)?;
                    if let Some(c) = check {
                        name(&f("check"), c)?;
                    }
                    if *mode == ProbeModeSpec::Parallel && *chunks == 0 {
                        return Err(invalid(f("chunks"), "must be positive"));
                    }
                    positive(&f("t_c_ms"), *t_c_ms)?;
                    non_negative(&f("epsilon_ms"), *epsilon_ms)?;
                    non_negative(&f("hit_ms"), *hit_ms)?;
                    non_negative(&f("miss_ms"), *miss_ms)?;
                    if hit_ms >= miss_ms {
                        return Err(invalid(f("hit_ms"), "hit RTT must be below miss RTT"));
                    }
                    non_negative(&f("start_ms"), *start_ms)?;
                    if until_ms < start_ms {
                        return Err(invalid(f("until_ms"), "ends before it starts"));
                    }
                    positive(&f("timeout_ms"), *timeout_ms)?;
                }
                AttackSpec::Clone { prefix, start_ms, until_ms, .. } => {
                    name(&f("prefix"), prefix)?;
                    non_negative(&f("start_ms"), *start_ms)?;
                    non_negative(&f("until_ms"), *until_ms)?;
                }
                AttackSpec::Flood { prefix, rate, start_ms, stop_ms, timeout_ms, .. } => {
                    name(&f("prefix"), prefix)?;
                    positive(&f("rate"), *rate)?;
                    non_negative(&f("start_ms"), *start_ms)?;
                    if let Some(s) = stop_ms {
                        non_negative(&f("stop_ms"), *s)?;
                    }
                    positive(&f("timeout_ms"), *timeout_ms)?;
                }
                AttackSpec::Pollution { prefix, catalog, rate, start_ms, stop_ms, .. } => {
                    name(&f("prefix"), prefix)?;
                    if *catalog == Some(0) {
                        return Err(invalid(f("catalog"), "must be positive"));
                    }
                    positive(&f("rate"), *rate)?;
                    non_negative(&f("start_ms"), *start_ms)?;
                    if let Some(s) = stop_ms {
                        non_negative(&f("stop_ms"), *s)?;
                    }
                }
                AttackSpec::Poison { prefix, .. } => drop(name(&f("prefix"), prefix)?),
                AttackSpec::TcEstimate { prefix, start_ms, initial_gap_ms, precision, max_gap_ms, repetitions, .. } => {
                    name(&f("prefix"), prefix)?;
                    non_negative(&f("start_ms"), *start_ms)?;
                    if let Some(x) = initial_gap_ms {
                        positive(&f("initial_gap_ms"), *x)?;
                    }
                    if let Some(x) = precision {
                        positive(&f("precision"), *x)?;
                    }
                    if let Some(x) = max_gap_ms {
                        positive(&f("max_gap_ms"), *x)?;
                    }
                    if *repetitions == Some(0) {
                        return Err(invalid(f("repetitions"), "must be positive"));
                    }
                }
                AttackSpec::Classifier { prefix, start_ms, calibration_samples, .. } => {
                    name(&f("prefix"), prefix)?;
                    non_negative(&f("start_ms"), *start_ms)?;
                    if *calibration_samples == 0 {
                        return Err(invalid(f("calibration_samples"), "must be positive"));
                    }
                }
            }
        }
        Ok(())
    }
}

fn non_negative(field: &str, x: f64) -> Result<(), ScenarioError> {
    if x.is_finite() && x >= 0.0 {
        Ok(())
    } else if x < 0.0 {
        Err(invalid(field, format!("negative value {x}")))
    } else {
        Err(invalid(field, format!("{x} is not a finite number")))
    }
}

fn positive(field: &str, x: f64) -> Result<(), ScenarioError> {
    non_negative(field, x)?;
    if x > 0.0 {
        Ok(())
    } else {
        Err(invalid(field, "must be positive"))
    }
}

fn delay(field: &str, d: DelayMs) -> Result<(), ScenarioError> {
    non_negative(&format!("{field}.min_ms"), d.min_ms)?;
    non_negative(&format!("{field}.jitter_ms"), d.jitter_ms)
}

fn name(field: &str, text: &str) -> Result<Name, ScenarioError> {
    Name::parse(text).map_err(|e| invalid(field, format!("bad name {text:?}: {e}")))
}

/// Reads and validates a scenario file. `bundled:<id>` names a corpus entry.
pub fn load_scenario(path: &Path) -> Result<ScenarioConfig, ScenarioError> {
    let text = scenario_text(path)?;
    ScenarioConfig::from_toml(&text)
}

/// Raw scenario text for a path or `bundled:<id>`.
pub fn scenario_text(path: &Path) -> Result<String, ScenarioError> {
    let shown = path.display().to_string();
    if let Some(id) = shown.strip_prefix("bundled:") {
        return crate::corpus::get(id).map(str::to_string).ok_or_else(|| ScenarioError::UnknownBundled(id.to_string()));
    }
    std::fs::read_to_string(path).map_err(|source| ScenarioError::Io { path: shown, source })
}
