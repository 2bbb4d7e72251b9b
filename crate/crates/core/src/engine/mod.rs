//! Deterministic discrete-event engine: topology, links, event queue, trace, metrics.

mod endpoint;
mod host;
mod metrics;
mod producer;
mod trace;
mod workload;

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::sync::Arc;

use rand::Rng;

pub use endpoint::{Agent, AgentCtx, AttackResult, Delayed, Endpoint, EndpointStats, Reply, Request};
pub use host::{Host, HostCtx, HostOut};
pub use metrics::{MetricRow, Metrics};
pub use producer::{payload_for, ChunkSpec, Conversation, KeyMode, Producer, ProducerConfig};
pub use trace::{TraceRecord, TraceSink};
pub use workload::{Consumer, NameDist, RequestProcess, Workload};

use crate::crypto::KeyRegistry;
use crate::defenses::{run_detectors, DetectorConfig, Flag, FaceStats, Response};
use crate::names::Name;
use crate::packet::{ContentObject, FaceId, Packet};
use crate::rng::{RngStreams, SimRng};
use crate::router::{Action, DropReason, PoisonSpec, Router, RouterConfig};
use crate::time::{SimDuration, SimTime};

pub type NodeId = usize;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EngineError {
    #[error("cannot schedule an event at {at}: the clock is already at {now}")]
    PastEvent { at: SimTime, now: SimTime },
    #[error("unknown node {0:?}")]
    UnknownNode(String),
    #[error("node {0:?} already exists")]
    DuplicateNode(String),
    #[error("node {0:?} is not a router")]
    NotRouter(String),
    #[error("invalid link {0}")]
    BadLink(String),
    #[error("invariant violated at {at}: {msg}")]
    Invariant { at: SimTime, msg: String },
}

#[derive(Clone, Debug)]
struct Port {
    peer: NodeId,
    peer_face: FaceId,
    delay: SimDuration,
    loss: f64,
}

pub enum NodeKind {
    Router(Box<Router>),
    Host(Box<dyn Host>),
}

struct Node {
    name: String,
    kind: NodeKind,
    ports: Vec<Port>,
    rng: SimRng,
    detectors: Option<DetectorConfig>,
    seen_flags: BTreeSet<Flag>,
    started: bool,
}

#[derive(Clone, Debug)]
enum EventKind {
    Arrival { node: NodeId, face: FaceId, packet: Packet },
    Timer { node: NodeId, token: u64 },
    Sample,
    DetectorTick { node: NodeId },
    Blacklist { node: NodeId, names: Arc<[Name]> },
    Revalidate { node: NodeId, every: Option<SimDuration> },
    ResetCounters,
}

struct Event {
    at: SimTime,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        (self.at, self.seq) == (other.at, other.seq)
    }
}
impl Eq for Event {}
impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Event {
    // BinaryHeap is a max-heap; invert so the earliest (time, seq) pops first.
    fn cmp(&self, other: &Self) -> Ordering {
        (other.at, other.seq).cmp(&(self.at, self.seq))
    }
}

/// A consumer-issued interest, as seen by an omniscient observer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RequestRecord {
    pub t: SimTime,
    pub node: NodeId,
    pub name: Name,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FlagRecord {
    pub t: SimTime,
    pub node: NodeId,
    pub flag: Flag,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Overhead {
    pub messages: u64,
    pub removals: u64,
}

pub struct Engine {
    streams: RngStreams,
    now: SimTime,
    seq: u64,
    queue: BinaryHeap<Event>,
    nodes: Vec<Node>,
    index: BTreeMap<String, NodeId>,
    pub registry: KeyRegistry,
    link_rng: SimRng,
    trace: Option<TraceSink>,
    request_log: Option<Vec<RequestRecord>>,
    flags: Vec<FlagRecord>,
    sample_interval: SimDuration,
    sampling: bool,
    audit: bool,
    events: u64,
    no_cache_violations: u64,
    pub blacklist: Overhead,
    pub revalidation: Overhead,
}

impl Engine {
    pub fn new(seed: u64) -> Self {
        let streams = RngStreams::new(seed);
        Engine {
            link_rng: streams.stream("links"),
            streams,
            now: SimTime::ZERO,
            seq: 0,
            queue: BinaryHeap::new(),
            nodes: Vec::new(),
            index: BTreeMap::new(),
            registry: KeyRegistry::new(),
            trace: None,
            request_log: None,
            flags: Vec::new(),
            sample_interval: SimDuration::from_millis(100),
            sampling: false,
            audit: cfg!(debug_assertions),
            events: 0,
            no_cache_violations: 0,
            blacklist: Overhead::default(),
            revalidation: Overhead::default(),
        }
    }

    pub fn streams(&self) -> &RngStreams {
        &self.streams
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn events_processed(&self) -> u64 {
        self.events
    }

    /// Keep the trace (lines in memory when `keep`, digest always).
    pub fn enable_trace(&mut self, keep: bool) {
        self.trace = Some(TraceSink::new(keep));
    }

    pub fn trace(&self) -> Option<&TraceSink> {
        self.trace.as_ref()
    }

    pub fn enable_request_log(&mut self) {
        self.request_log.get_or_insert_with(Vec::new);
    }

    pub fn request_log(&self) -> &[RequestRecord] {
        self.request_log.as_deref().unwrap_or(&[])
    }

    pub fn flags(&self) -> &[FlagRecord] {
        &self.flags
    }

    pub fn set_audit(&mut self, on: bool) {
        self.audit = on;
    }

    pub fn set_sample_interval(&mut self, every: SimDuration) {
        self.sample_interval = every;
    }

    pub fn no_cache_violations(&self) -> u64 {
        self.no_cache_violations
    }

    fn add_node(&mut self, name: &str, kind: NodeKind) -> Result<NodeId, EngineError> {
        if self.index.contains_key(name) {
            return Err(EngineError::DuplicateNode(name.to_string()));
        }
        let id = self.nodes.len();
        self.nodes.push(Node {
            name: name.to_string(),
            kind,
            ports: Vec::new(),
            rng: self.streams.stream(&format!("host/{name}")),
            detectors: None,
            seen_flags: BTreeSet::new(),
            started: false,
        });
        self.index.insert(name.to_string(), id);
        Ok(id)
    }

    pub fn add_router(&mut self, name: &str, config: RouterConfig) -> Result<NodeId, EngineError> {
        let router = Router::new(config, &self.streams, name);
        self.add_node(name, NodeKind::Router(Box::new(router)))
    }

    pub fn add_host(&mut self, name: &str, host: Box<dyn Host>) -> Result<NodeId, EngineError> {
        self.add_node(name, NodeKind::Host(host))
    }

    /// Registers a long-lived key for the producer and adds it.
    pub fn add_producer(&mut self, name: &str, config: ProducerConfig) -> Result<NodeId, EngineError> {
        let mut rng = self.streams.stream(&format!("keys/{name}"));
        let key = self.registry.register(name, &mut rng);
        self.add_host(name, Box::new(Producer::new(config, key)))
    }

    pub fn add_endpoint(&mut self, name: &str, agent: Box<dyn Agent>) -> Result<NodeId, EngineError> {
        self.add_host(name, Box::new(Endpoint::new(agent)))
    }

    pub fn node_id(&self, name: &str) -> Result<NodeId, EngineError> {
        self.index.get(name).copied().ok_or_else(|| EngineError::UnknownNode(name.to_string()))
    }

    pub fn node_name(&self, id: NodeId) -> &str {
        &self.nodes[id].name
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn router_ids(&self) -> Vec<NodeId> {
        (0..self.nodes.len()).filter(|i| matches!(self.nodes[*i].kind, NodeKind::Router(_))).collect()
    }

    pub fn is_router(&self, id: NodeId) -> bool {
        matches!(self.nodes[id].kind, NodeKind::Router(_))
    }

    pub fn router(&self, id: NodeId) -> Option<&Router> {
        match &self.nodes.get(id)?.kind {
            NodeKind::Router(r) => Some(r),
            NodeKind::Host(_) => None,
        }
    }

    pub fn router_mut(&mut self, id: NodeId) -> Option<&mut Router> {
        match &mut self.nodes.get_mut(id)?.kind {
            NodeKind::Router(r) => Some(r),
            NodeKind::Host(_) => None,
        }
    }

    pub fn host<T: 'static>(&self, id: NodeId) -> Option<&T> {
        match &self.nodes.get(id)?.kind {
            NodeKind::Host(h) => h.as_any().downcast_ref(),
            NodeKind::Router(_) => None,
        }
    }

    pub fn host_mut<T: 'static>(&mut self, id: NodeId) -> Option<&mut T> {
        match &mut self.nodes.get_mut(id)?.kind {
            NodeKind::Host(h) => h.as_any_mut().downcast_mut(),
            NodeKind::Router(_) => None,
        }
    }

    pub fn endpoint(&self, id: NodeId) -> Option<&Endpoint> {
        self.host::<Endpoint>(id)
    }

    /// The agent running on endpoint `id`, downcast to `T`.
    pub fn agent<T: 'static>(&self, id: NodeId) -> Option<&T> {
        self.endpoint(id)?.agent_as::<T>()
    }

    pub fn agent_mut<T: 'static>(&mut self, id: NodeId) -> Option<&mut T> {
        self.host_mut::<Endpoint>(id)?.agent_as_mut::<T>()
    }

    /// Attack outcomes reported by endpoint agents, in node order.
    pub fn attack_results(&self) -> Vec<(String, AttackResult)> {
        (0..self.nodes.len())
            .filter_map(|i| Some((self.nodes[i].name.clone(), self.endpoint(i)?.agent().attack_result()?)))
            .collect()
    }

    /// Connects two nodes; returns the new face on each side.
    pub fn link(&mut self, a: NodeId, b: NodeId, delay: SimDuration) -> Result<(FaceId, FaceId), EngineError> {
        self.link_lossy(a, b, delay, 0.0)
    }

    pub fn link_lossy(
        &mut self,
        a: NodeId,
        b: NodeId,
        delay: SimDuration,
        loss: f64,
    ) -> Result<(FaceId, FaceId), EngineError> {
        if a >= self.nodes.len() || b >= self.nodes.len() {
            return Err(EngineError::BadLink(format!("{a}-{b}: unknown endpoint")));
        }
        if a == b {
            return Err(EngineError::BadLink(format!("{}: self loop", self.nodes[a].name)));
        }
        if !(0.0..=1.0).contains(&loss) {
            return Err(EngineError::BadLink(format!("loss {loss} outside [0, 1]")));
        }
        let fa = FaceId(self.nodes[a].ports.len() as u32);
        let fb = FaceId(self.nodes[b].ports.len() as u32);
        self.nodes[a].ports.push(Port { peer: b, peer_face: fb, delay, loss });
        self.nodes[b].ports.push(Port { peer: a, peer_face: fa, delay, loss });
        Ok((fa, fb))
    }

    /// Face of `node` that leads directly to `neighbor`.
    pub fn face_toward(&self, node: NodeId, neighbor: NodeId) -> Option<FaceId> {
        self.nodes[node].ports.iter().position(|p| p.peer == neighbor).map(|i| FaceId(i as u32))
    }

    /// Static FIB entry on `router` toward its direct neighbor.
    pub fn route(&mut self, router: NodeId, prefix: Name, neighbor: NodeId) -> Result<(), EngineError> {
        let face = self
            .face_toward(router, neighbor)
            .ok_or_else(|| EngineError::BadLink(format!("{} is not adjacent to {}", self.nodes[router].name, self.nodes[neighbor].name)))?;
        let name = self.nodes[router].name.clone();
        self.router_mut(router).ok_or(EngineError::NotRouter(name))?.fib.insert(prefix, face);
        Ok(())
    }

    /// Shortest-delay routes from every router toward every announced prefix.
    /// Paths never transit through hosts.
    pub fn auto_route(&mut self) {
        let mut announcers: BTreeMap<Name, Vec<NodeId>> = BTreeMap::new();
        for (id, node) in self.nodes.iter().enumerate() {
            if let NodeKind::Host(h) = &node.kind {
                for p in h.announces() {
                    announcers.entry(p).or_default().push(id);
                }
            }
        }
        for (prefix, sources) in announcers {
            let next = self.shortest_next_hops(&sources);
            for (router, face) in next {
                if let Some(r) = self.router_mut(router) {
                    r.fib.insert(prefix.clone(), face);
                }
            }
        }
    }

    /// Multi-source Dijkstra; returns, for each reachable router, the face
    /// on the first hop toward the nearest source.
    fn shortest_next_hops(&self, sources: &[NodeId]) -> Vec<(NodeId, FaceId)> {
        let (_, via) = self.dijkstra(sources, true);
        via.into_iter().enumerate().filter_map(|(n, f)| Some((n, f?))).filter(|(n, _)| self.is_router(*n)).collect()
    }

    /// Distances (µs) from the sources; `routers_only` forbids transit via hosts.
    fn dijkstra(&self, sources: &[NodeId], routers_only: bool) -> (Vec<Option<u64>>, Vec<Option<FaceId>>) {
        let n = self.nodes.len();
        let mut dist: Vec<Option<u64>> = vec![None; n];
        let mut via: Vec<Option<FaceId>> = vec![None; n];
        let mut heap = BinaryHeap::new();
        for &s in sources {
            dist[s] = Some(0);
            heap.push(std::cmp::Reverse((0u64, s)));
        }
        while let Some(std::cmp::Reverse((d, u))) = heap.pop() {
            if dist[u].is_some_and(|x| x < d) {
                continue;
            }
            let transit_ok = !routers_only || sources.contains(&u) || self.is_router(u);
            if !transit_ok {
                continue;
            }
            for port in &self.nodes[u].ports {
                let v = port.peer;
                let nd = d + port.delay.as_micros();
                if dist[v].is_none_or(|x| nd < x) {
                    dist[v] = Some(nd);
                    via[v] = Some(port.peer_face);
                    heap.push(std::cmp::Reverse((nd, v)));
                }
            }
        }
        (dist, via)
    }

    /// One-way shortest-path delay between two nodes over any links.
    pub fn path_delay(&self, from: NodeId, to: NodeId) -> Option<SimDuration> {
        self.dijkstra(&[from], false).0[to].map(SimDuration::from_micros)
    }

    /// Turns on detection at an edge router.
    pub fn set_detectors(&mut self, router: NodeId, cfg: DetectorConfig) -> Result<(), EngineError> {
        let name = self.nodes[router].name.clone();
        let r = self.router_mut(router).ok_or(EngineError::NotRouter(name))?;
        r.face_stats = Some(FaceStats::new(cfg.window));
        let first = self.now + cfg.interval;
        self.nodes[router].detectors = Some(cfg);
        self.push(first, EventKind::DetectorTick { node: router });
        Ok(())
    }

    pub fn set_poison(&mut self, router: NodeId, spec: PoisonSpec) -> Result<(), EngineError> {
        let name = self.nodes[router].name.clone();
        self.router_mut(router).ok_or(EngineError::NotRouter(name))?.poison = Some(spec);
        Ok(())
    }

    fn push(&mut self, at: SimTime, kind: EventKind) {
        self.seq += 1;
        self.queue.push(Event { at, seq: self.seq, kind });
    }

    fn schedule(&mut self, at: SimTime, kind: EventKind) -> Result<(), EngineError> {
        if at < self.now {
            return Err(EngineError::PastEvent { at, now: self.now });
        }
        self.push(at, kind);
        Ok(())
    }

    /// Fires `token` on host `node` at `at`.
    pub fn schedule_timer(&mut self, at: SimTime, node: NodeId, token: u64) -> Result<(), EngineError> {
        self.schedule(at, EventKind::Timer { node, token })
    }

    /// Start of the measurement window: counters accumulated before `at` are discarded.
    pub fn schedule_reset(&mut self, at: SimTime) -> Result<(), EngineError> {
        self.schedule(at, EventKind::ResetCounters)
    }

    /// Delivers a blacklist to `router` at `at`.
    pub fn schedule_blacklist(&mut self, at: SimTime, router: NodeId, names: Arc<[Name]>) -> Result<(), EngineError> {
        self.schedule(at, EventKind::Blacklist { node: router, names })
    }

    /// Periodic revalidation of `router`'s cache against the producers.
    pub fn schedule_revalidation(&mut self, at: SimTime, router: NodeId, every: Option<SimDuration>) -> Result<(), EngineError> {
        self.schedule(at, EventKind::Revalidate { node: router, every })
    }

    fn start_hosts(&mut self) -> Result<(), EngineError> {
        if !self.sampling && self.nodes.iter().any(|n| matches!(n.kind, NodeKind::Router(_))) {
            self.sampling = true;
            let at = self.now + self.sample_interval;
            self.push(at, EventKind::Sample);
        }
        for id in 0..self.nodes.len() {
            if !self.nodes[id].started {
                self.nodes[id].started = true;
                if matches!(self.nodes[id].kind, NodeKind::Host(_)) {
                    self.host_call(id, |h, ctx| h.start(ctx))?;
                }
            }
        }
        Ok(())
    }

    /// Processes every event with time ≤ `t_end`; the clock ends at `t_end`.
    pub fn run_until(&mut self, t_end: SimTime) -> Result<(), EngineError> {
        self.run_inner(t_end, false).map(|_| ())
    }

    /// Like [`run_until`](Self::run_until) but stops as soon as every host
    /// reports done. Returns whether that happened.
    pub fn run_until_done(&mut self, t_end: SimTime) -> Result<bool, EngineError> {
        self.run_inner(t_end, true)
    }

    fn all_done(&self) -> bool {
        self.nodes.iter().all(|n| match &n.kind {
            NodeKind::Host(h) => h.is_done(),
            NodeKind::Router(_) => true,
        })
    }

    fn run_inner(&mut self, t_end: SimTime, stop_when_done: bool) -> Result<bool, EngineError> {
        self.start_hosts()?;
        if stop_when_done && self.all_done() {
            return Ok(true);
        }
        while let Some(head) = self.queue.peek() {
            if head.at > t_end {
                break;
            }
            let ev = self.queue.pop().expect("peeked");
            self.now = ev.at;
            self.events += 1;
            let host_event = matches!(
                ev.kind,
                EventKind::Timer { .. } | EventKind::Arrival { .. }
            );
            self.process(ev.kind)?;
            if stop_when_done && host_event && self.all_done() {
                return Ok(true);
            }
        }
        if t_end != SimTime::MAX {
            self.now = self.now.max(t_end);
        }
        Ok(stop_when_done && self.all_done())
    }

    fn face_label(&self, node: NodeId, face: FaceId) -> String {
        format!("{}:{}", self.nodes[node].name, face)
    }

    fn record(&mut self, node: NodeId, kind: &str, name: &Name, face: Option<FaceId>, outcome: &str) {
        if self.trace.is_none() {
            return;
        }
        let rec = TraceRecord {
            t: self.now.as_micros(),
            node: self.nodes[node].name.clone(),
            kind: kind.to_string(),
            name: name.to_string(),
            face: face.map(|f| self.face_label(node, f)).unwrap_or_default(),
            outcome: outcome.to_string(),
        };
        self.trace.as_mut().expect("checked").push(&rec);
    }

    fn deliver(&mut self, from: NodeId, face: FaceId, packet: Packet, extra: SimDuration) {
        let Some(port) = self.nodes[from].ports.get(face.0 as usize).cloned() else {
            self.record(from, "drop", packet.name(), Some(face), "no_such_face");
            return;
        };
        if port.loss > 0.0 && self.link_rng.random::<f64>() < port.loss {
            self.record(from, "loss", packet.name(), Some(face), "lost");
            return;
        }
        let at = self.now + extra + port.delay;
        self.push(at, EventKind::Arrival { node: port.peer, face: port.peer_face, packet });
    }

    fn process(&mut self, kind: EventKind) -> Result<(), EngineError> {
        match kind {
            EventKind::Arrival { node, face, packet } => {
                if self.is_router(node) {
                    self.router_arrival(node, face, packet)?;
                } else {
                    match packet {
                        Packet::Interest(i) => {
                            self.record(node, "interest", &i.name, Some(face), "recv");
                            self.host_call(node, |h, ctx| h.on_interest(&i, ctx))?;
                        }
                        Packet::Data(d) => {
                            self.record(node, "data", &d.name, Some(face), "recv");
                            self.host_call(node, |h, ctx| h.on_data(&d, ctx))?;
                        }
                    }
                }
            }
            EventKind::Timer { node, token } => {
                self.host_call(node, |h, ctx| h.on_timer(token, ctx))?;
            }
            EventKind::Sample => {
                let now = self.now;
                for id in self.router_ids() {
                    let r = self.router_mut(id).expect("router id");
                    r.pit_expire(now);
                    r.sample_pit();
                }
                let at = now + self.sample_interval;
                self.push(at, EventKind::Sample);
            }
            EventKind::DetectorTick { node } => self.detector_tick(node),
            EventKind::Blacklist { node, names } => {
                let now = self.now;
                let removed = self.router_mut(node).map_or(0, |r| r.apply_blacklist(&names, now));
                self.blacklist.removals += removed as u64;
                for n in names.iter() {
                    self.record(node, "blacklist", n, None, "applied");
                }
            }
            EventKind::Revalidate { node, every } => self.revalidate(node, every),
            EventKind::ResetCounters => self.reset_counters(),
        }
        Ok(())
    }

    fn router_arrival(&mut self, node: NodeId, face: FaceId, packet: Packet) -> Result<(), EngineError> {
        let now = self.now;
        let (kind, name, actions) = {
            let NodeKind::Router(r) = &mut self.nodes[node].kind else { unreachable!("checked router") };
            match &packet {
                Packet::Interest(i) => ("interest", i.name.clone(), r.on_interest(i, face, now)),
                Packet::Data(d) => ("data", d.name.clone(), r.on_data(d, face, now, &self.registry)),
            }
        };
        let outcome = summarize(&actions, kind);
        self.record(node, kind, &name, Some(face), &outcome);
        for action in actions {
            match action {
                Action::Forward { face, interest } => self.deliver(node, face, Packet::Interest(interest), SimDuration::ZERO),
                Action::SendData { face, object, delay } => self.deliver(node, face, Packet::Data(object), delay),
                Action::Cached { name } => {
                    let r = self.router(node).expect("router");
                    if r.config().honor_no_cache && r.cs().get(&name).is_some_and(|e| e.object.no_cache) {
                        self.no_cache_violations += 1;
                    }
                    self.record(node, "cache", &name, None, "inserted");
                }
                Action::Evicted { name } => self.record(node, "evict", &name, None, "evicted"),
                Action::Hit { .. } | Action::Aggregated { .. } | Action::Drop { .. } => {}
            }
        }
        if self.audit {
            let r = self.router(node).expect("router");
            r.audit(now).map_err(|msg| EngineError::Invariant { at: now, msg: format!("{}: {msg}", self.nodes[node].name) })?;
            if self.no_cache_violations > 0 {
                return Err(EngineError::Invariant { at: now, msg: "no-cache object cached".into() });
            }
        }
        Ok(())
    }

    fn host_call<F>(&mut self, node: NodeId, f: F) -> Result<(), EngineError>
    where
        F: FnOnce(&mut dyn Host, &mut HostCtx<'_>),
    {
        let now = self.now;
        let out = {
            let Node { name, kind, rng, .. } = &mut self.nodes[node];
            let NodeKind::Host(host) = kind else {
                return Err(EngineError::Invariant { at: now, msg: format!("{name} is not a host") });
            };
            let mut ctx = HostCtx::new(now, name, rng, &mut self.registry);
            f(host.as_mut(), &mut ctx);
            ctx.out
        };
        for o in out {
            match o {
                HostOut::Interest(i) => {
                    if let Some(log) = self.request_log.as_mut() {
                        log.push(RequestRecord { t: now, node, name: i.name.clone() });
                    }
                    self.record(node, "send", &i.name, Some(FaceId(0)), "interest");
                    self.deliver(node, FaceId(0), Packet::Interest(i), SimDuration::ZERO);
                }
                HostOut::Data { object, delay } => {
                    self.record(node, "send", &object.name, Some(FaceId(0)), "data");
                    self.deliver(node, FaceId(0), Packet::Data(object), delay);
                }
                HostOut::Timer { after, token } => self.push(now + after, EventKind::Timer { node, token }),
                HostOut::Note { kind, name, outcome } => self.record(node, kind, &name, None, &outcome),
            }
        }
        Ok(())
    }

    fn detector_tick(&mut self, node: NodeId) {
        let now = self.now;
        let Some(cfg) = self.nodes[node].detectors.clone() else { return };
        let flags = {
            let r = self.router_mut(node).expect("detectors only on routers");
            let Some(stats) = r.face_stats.as_mut() else { return };
            stats.prune(now);
            let stats = r.face_stats.as_ref().expect("present");
            run_detectors(r.cs(), stats, &cfg, now)
        };
        for flag in flags {
            if !self.nodes[node].seen_flags.insert(flag.clone()) {
                continue;
            }
            let name = flag.name.clone().unwrap_or_else(Name::root);
            self.record(node, "flag", &name, flag.face, flag.kind.as_str());
            self.apply_response(node, &flag, cfg.response);
            self.flags.push(FlagRecord { t: now, node, flag });
        }
        self.push(now + cfg.interval, EventKind::DetectorTick { node });
    }

    fn apply_response(&mut self, node: NodeId, flag: &Flag, response: Option<Response>) {
        let now = self.now;
        match (response, flag.face, &flag.name) {
            (Some(Response::IgnoreForCaching), Some(face), _) => {
                self.router_mut(node).expect("router").defense.ignored_faces.insert(face);
            }
            (Some(Response::DropInterests), Some(face), _) => {
                self.router_mut(node).expect("router").defense.dropped_faces.insert(face);
            }
            (Some(Response::BlacklistProducer), _, Some(name)) => {
                let key = self.router(node).expect("router").cs().get(name).map(|e| e.object.signature.key_id);
                if let Some(key) = key {
                    for id in self.router_ids() {
                        let removed = self.router_mut(id).expect("router").blacklist_producer(key, now);
                        self.blacklist.removals += removed as u64;
                    }
                }
            }
            _ => {}
        }
    }

    fn revalidate(&mut self, node: NodeId, every: Option<SimDuration>) {
        let now = self.now;
        // every content origin answers freshness queries
        let origins: Vec<NodeId> = (0..self.nodes.len()).filter(|i| self.host::<Producer>(*i).is_some()).collect();
        let mut checked = 0u64;
        let mut stale = Vec::new();
        if let Some(r) = self.router(node) {
            for (name, entry) in r.cs().entries() {
                checked += 1;
                let fresh = origins.iter().filter_map(|o| self.host::<Producer>(*o)).any(|p| p.is_fresh(&entry.object));
                if !fresh {
                    stale.push(name.clone());
                }
            }
        }
        let stale: BTreeSet<Name> = stale.into_iter().collect();
        let removed = self.router_mut(node).map_or(0, |r| r.revalidate(now, |n, _| !stale.contains(n)));
        // one query and one answer per checked entry
        self.revalidation.messages += 2 * checked;
        self.revalidation.removals += removed as u64;
        if let Some(every) = every {
            self.push(now + every, EventKind::Revalidate { node, every: Some(every) });
        }
    }

    /// Zeroes every counter; pending requests from before stay uncounted.
    pub fn reset_counters(&mut self) {
        for node in &mut self.nodes {
            match &mut node.kind {
                NodeKind::Router(r) => r.counters = Default::default(),
                NodeKind::Host(h) => h.reset_metrics(),
            }
        }
    }

    /// Per-router, per-face and per-host metrics, in node order.
    pub fn metrics(&self) -> Metrics {
        let mut m = Metrics::default();
        for node in &self.nodes {
            let e = node.name.as_str();
            match &node.kind {
                NodeKind::Router(r) => {
                    let c = &r.counters;
                    m.push(e, "interests_in", c.interests_in as f64);
                    m.push(e, "data_in", c.data_in as f64);
                    m.push(e, "lookups", c.lookups as f64);
                    m.push(e, "hits", c.hits as f64);
                    m.push_opt(e, "hit_rate", c.hit_rate());
                    m.push(e, "forwarded", c.forwarded as f64);
                    m.push(e, "aggregated", c.aggregated as f64);
                    m.push(e, "data_sent", c.data_sent as f64);
                    m.push(e, "cache_inserts", c.cache_inserts as f64);
                    m.push(e, "evictions", c.evictions as f64);
                    m.push(e, "cs_size", r.cs().len() as f64);
                    m.push(e, "pit_size", r.pit().len() as f64);
                    m.push(e, "pit_peak", c.pit_peak as f64);
                    m.push_opt(e, "pit_mean", c.pit_mean());
                    m.push(e, "verifications", c.verifications as f64);
                    m.push_opt(e, "processing_mean_us", c.processing_mean_us());
                    m.push(e, "exclude_ignored", c.exclude_ignored as f64);
                    m.push(e, "poisoned", c.poisoned as f64);
                    for (reason, n) in &c.drops {
                        m.push(e, &format!("dropped_{}", reason.as_str()), *n as f64);
                    }
                    for (face, t) in &c.per_face {
                        let fe = format!("{e}:{face}");
                        m.push(&fe, "lookups", t.lookups as f64);
                        m.push_opt(&fe, "hit_rate", (t.lookups > 0).then(|| t.hits as f64 / t.lookups as f64));
                    }
                }
                NodeKind::Host(h) => {
                    for (k, v) in h.metrics() {
                        m.push(e, &k, v);
                    }
                }
            }
        }
        if !self.nodes.is_empty() {
            m.push("network", "events", self.events as f64);
            m.push("network", "flags", self.flags.len() as f64);
            m.push("network", "blacklist_messages", self.blacklist.messages as f64);
            m.push("network", "blacklist_removals", self.blacklist.removals as f64);
            m.push("network", "revalidation_messages", self.revalidation.messages as f64);
            m.push("network", "revalidation_removals", self.revalidation.removals as f64);
            m.push("network", "no_cache_violations", self.no_cache_violations as f64);
        }
        m
    }

    /// (router, name) for every cache insertion in the kept trace.
    pub fn cached_names_in_trace(&self) -> BTreeSet<(String, String)> {
        self.trace
            .iter()
            .flat_map(|t| t.records())
            .filter(|r| r.kind == "cache")
            .map(|r| (r.node, r.name))
            .collect()
    }

    /// Helper for tests and attacks: a fresh object from producer `id`.
    pub fn produce(&mut self, id: NodeId, name: &Name) -> Option<ContentObject> {
        let mut rng = self.streams.stream("oracle");
        let Node { kind, .. } = &mut self.nodes[id];
        let NodeKind::Host(h) = kind else { return None };
        let p = h.as_any_mut().downcast_mut::<Producer>()?;
        p.make_object(name, &mut self.registry, &mut rng)
    }
}

fn summarize(actions: &[Action], kind: &str) -> String {
    let sends = actions.iter().filter(|a| matches!(a, Action::SendData { .. })).count();
    if actions.iter().any(|a| matches!(a, Action::Hit { .. })) {
        return "hit".into();
    }
    if let Some(reason) = actions.iter().find_map(|a| match a {
        Action::Drop { reason, .. } => Some(*reason),
        _ => None,
    }) {
        return format!("drop:{}", reason_str(reason));
    }
    if actions.iter().any(|a| matches!(a, Action::Aggregated { .. })) {
        return "aggregate".into();
    }
    if actions.iter().any(|a| matches!(a, Action::Forward { .. })) {
        return "forward".into();
    }
    if kind == "data" {
        return format!("deliver:{sends}");
    }
    "none".into()
}

fn reason_str(r: DropReason) -> &'static str {
    r.as_str()
}
