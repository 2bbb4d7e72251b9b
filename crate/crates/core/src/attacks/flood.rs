//! Interest flooding, cache pollution and content poisoning.

use std::any::Any;

use crate::attacks::{attach, AttackVariant, ACCESS_DELAY};
use crate::engine::{Agent, AgentCtx, AttackResult, Consumer, Engine, EngineError, NameDist, NodeId, RequestProcess, Workload};
use crate::names::Name;
use crate::router::{PoisonMode, PoisonSpec};
use crate::time::{SimDuration, SimTime};

#[derive(Clone, Debug, PartialEq)]
pub enum FloodVariant {
    /// The same name over and over (mostly aggregated or served from cache).
    SameName(Name),
    /// A never-repeating name under a served prefix.
    DistinctNames(Name),
    /// Distinct names under a routed prefix nobody answers.
    Nonexistent(Name),
    /// Distinct names under a prefix whose producer answers slowly on purpose.
    Collusion(Name),
    /// Junk content pulled into caches: unique names, or a small catalog.
    Pollution { prefix: Name, catalog: Option<u64> },
}

impl FloodVariant {
    pub fn attack(&self) -> AttackVariant {
        match self {
            FloodVariant::SameName(_) => AttackVariant::IfaSameName,
            FloodVariant::DistinctNames(_) => AttackVariant::IfaDistinctNames,
            FloodVariant::Nonexistent(_) => AttackVariant::IfaNonexistent,
            FloodVariant::Collusion(_) => AttackVariant::IfaCollusion,
            FloodVariant::Pollution { .. } => AttackVariant::CachePollution,
        }
    }

    fn names(&self) -> NameDist {
        match self {
            FloodVariant::SameName(n) => NameDist::Fixed(n.clone()),
            FloodVariant::DistinctNames(p) | FloodVariant::Nonexistent(p) | FloodVariant::Collusion(p) => {
                NameDist::Unique { prefix: p.clone() }
            }
            FloodVariant::Pollution { prefix, catalog: None } => NameDist::Unique { prefix: prefix.clone() },
            FloodVariant::Pollution { prefix, catalog: Some(c) } => NameDist::Uniform { prefix: prefix.clone(), catalog: *c },
        }
    }

    fn target(&self) -> &Name {
        match self {
            FloodVariant::SameName(n)
            | FloodVariant::DistinctNames(n)
            | FloodVariant::Nonexistent(n)
            | FloodVariant::Collusion(n)
            | FloodVariant::Pollution { prefix: n, .. } => n,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FloodSpec {
    pub variant: FloodVariant,
    /// Interests per second per bot.
    pub rate: f64,
    pub start: SimTime,
    pub stop: Option<SimTime>,
    pub timeout: SimDuration,
    /// Poisson arrivals instead of a fixed period.
    pub poisson: bool,
}

impl FloodSpec {
    pub fn new(variant: FloodVariant, rate: f64) -> Self {
        FloodSpec { variant, rate, start: SimTime::ZERO, stop: None, timeout: SimDuration::from_secs(4), poisson: false }
    }
}

/// A bot sending interests according to a [`FloodSpec`].
pub struct Flooder {
    spec: FloodSpec,
    consumer: Consumer,
}

impl Flooder {
    pub fn new(spec: FloodSpec) -> Self {
        let process = if spec.poisson || spec.rate <= 0.0 {
            RequestProcess::Poisson { rate: spec.rate }
        } else {
            RequestProcess::Periodic { interval: SimDuration::from_secs_f64(1.0 / spec.rate) }
        };
        let mut workload = Workload::new(process, spec.variant.names());
        workload.start = spec.start;
        workload.stop = spec.stop;
        workload.timeout = spec.timeout;
        Flooder { spec, consumer: Consumer::new(workload) }
    }

    pub fn sent(&self) -> u64 {
        self.consumer.issued()
    }
}

impl Agent for Flooder {
    fn start(&mut self, ctx: &mut AgentCtx<'_>) {
        self.consumer.start(ctx);
    }

    fn on_timer(&mut self, token: u64, ctx: &mut AgentCtx<'_>) {
        self.consumer.on_timer(token, ctx);
    }

    fn report(&self) -> Vec<(String, f64)> {
        vec![("attack_interests".to_string(), self.sent() as f64)]
    }

    fn attack_result(&self) -> Option<AttackResult> {
        Some(AttackResult {
            variant: self.spec.variant.attack().as_str().to_string(),
            params: format!("target={};rate={}", self.spec.variant.target(), self.spec.rate),
            metric: "interests_sent".to_string(),
            value: self.sent() as f64,
            aux: Vec::new(),
        })
    }

    fn as_any(&self) -> &dyn Any {
        self
    }

    fn as_any_mut(&mut self) -> &mut dyn Any {
        self
    }
}

fn attach_bots(engine: &mut Engine, edges: &[NodeId], spec: &FloodSpec, label: &str) -> Result<Vec<NodeId>, EngineError> {
    edges
        .iter()
        .map(|&edge| attach(engine, edge, label, ACCESS_DELAY, Box::new(Flooder::new(spec.clone()))))
        .collect()
}

/// Attaches one flooding bot per entry of `edges`. The caller runs the engine.
pub fn ifa_flood(engine: &mut Engine, edges: &[NodeId], spec: &FloodSpec) -> Result<Vec<NodeId>, EngineError> {
    attach_bots(engine, edges, spec, "bot")
}

/// Attaches one junk-requesting bot per entry of `edges`.
pub fn pollute_cache(
    engine: &mut Engine,
    edges: &[NodeId],
    prefix: &Name,
    catalog: Option<u64>,
    rate: f64,
    start: SimTime,
    stop: Option<SimTime>,
) -> Result<Vec<NodeId>, EngineError> {
    let mut spec = FloodSpec::new(FloodVariant::Pollution { prefix: prefix.clone(), catalog }, rate);
    spec.start = start;
    spec.stop = stop;
    attach_bots(engine, edges, &spec, "polluter")
}

/// Turns `router` into a compromised node that substitutes bad objects for
/// everything under `prefix` it forwards.
pub fn poison_content(engine: &mut Engine, router: NodeId, prefix: &Name, mode: PoisonMode) -> Result<(), EngineError> {
    engine.set_poison(router, PoisonSpec { prefix: prefix.clone(), mode })
}
