//! Consumer-side plumbing: request tracking, timeouts, RTTs and end-to-end
//! verification, wrapped around a pluggable [`Agent`].

use std::any::Any;
use std::collections::BTreeMap;

use rand::Rng;

use crate::crypto::{KeyRegistry, Verification};
use crate::engine::host::{Host, HostCtx};
use crate::names::Name;
use crate::packet::{ContentObject, Interest};
use crate::rng::SimRng;
use crate::time::{SimDuration, SimTime};

/// One outgoing request. The nonce is filled in by the endpoint.
#[derive(Clone, Debug, PartialEq)]
pub struct Request {
    pub interest: Interest,
    pub timeout: SimDuration,
    pub tag: u64,
}

/// A content object matched to the request that asked for it.
#[derive(Clone, Debug, PartialEq)]
pub struct Reply {
    pub requested: Name,
    pub object: ContentObject,
    pub sent_at: SimTime,
    pub rtt: SimDuration,
    pub verification: Verification,
    pub tag: u64,
}

/// A row for the attack-results table.
#[derive(Clone, Debug, PartialEq)]
pub struct AttackResult {
    pub variant: String,
    pub params: String,
    pub metric: String,
    pub value: f64,
    pub aux: Vec<(String, String)>,
}

pub struct AgentCtx<'a> {
    pub now: SimTime,
    pub node: &'a str,
    pub rng: &'a mut SimRng,
    pub registry: &'a KeyRegistry,
    requests: Vec<Request>,
    timers: Vec<(SimDuration, u64)>,
    notes: Vec<(&'static str, Name, String)>,
}

impl AgentCtx<'_> {
    pub fn request(&mut self, interest: Interest, timeout: SimDuration, tag: u64) {
        self.requests.push(Request { interest, timeout, tag });
    }

    /// Plain interest for `name` with the endpoint's default timeout.
    pub fn fetch(&mut self, name: Name, tag: u64) {
        self.request(Interest::new(name, 0), SimDuration::ZERO, tag);
    }

    pub fn set_timer(&mut self, after: SimDuration, token: u64) {
        self.timers.push((after, token));
    }

    pub fn note(&mut self, kind: &'static str, name: &Name, outcome: impl Into<String>) {
        self.notes.push((kind, name.clone(), outcome.into()));
    }
}

/// Application logic running on an endpoint.
pub trait Agent: Send {
    fn start(&mut self, ctx: &mut AgentCtx<'_>);
    fn on_timer(&mut self, _token: u64, _ctx: &mut AgentCtx<'_>) {}
    fn on_reply(&mut self, _reply: &Reply, _ctx: &mut AgentCtx<'_>) {}
    fn on_timeout(&mut self, _name: &Name, _tag: u64, _ctx: &mut AgentCtx<'_>) {}
    /// Background agents are always done; attack agents finish their procedure.
    fn is_done(&self) -> bool {
        true
    }
    fn report(&self) -> Vec<(String, f64)> {
        Vec::new()
    }
    fn attack_result(&self) -> Option<AttackResult> {
        None
    }
    fn as_any(&self) -> &dyn Any;
    fn as_any_mut(&mut self) -> &mut dyn Any;
}

/// Defers another agent's start to an absolute time.
pub struct Delayed {
    at: SimTime,
    inner: Box<dyn Agent>,
    started: bool,
}

impl Delayed {
    pub fn new(at: SimTime, inner: Box<dyn Agent>) -> Self {
        Delayed { at, inner, started: false }
    }

    /// Runs `f` on the inner agent, shifting its timer tokens past ours.
    fn inner_call<F>(&mut self, ctx: &mut AgentCtx<'_>, f: F)
    where
        F: FnOnce(&mut dyn Agent, &mut AgentCtx<'_>),
    {
        let before = ctx.timers.len();
        f(self.inner.as_mut(), ctx);
        for (_, token) in &mut ctx.timers[before..] {
            *token += 1;
        }
    }
}

impl Agent for Delayed {
    fn start(&mut self, ctx: &mut AgentCtx<'_>) {
        ctx.set_timer(self.at.max(ctx.now).since(ctx.now), 0);
    }

    fn on_timer(&mut self, token: u64, ctx: &mut AgentCtx<'_>) {
        if token == 0 {
            self.started = true;
            self.inner_call(ctx, |a, c| a.start(c));
        } else {
            self.inner_call(ctx, |a, c| a.on_timer(token - 1, c));
        }
    }

    fn on_reply(&mut self, reply: &Reply, ctx: &mut AgentCtx<'_>) {
        self.inner_call(ctx, |a, c| a.on_reply(reply, c));
    }

    fn on_timeout(&mut self, name: &Name, tag: u64, ctx: &mut AgentCtx<'_>) {
        self.inner_call(ctx, |a, c| a.on_timeout(name, tag, c));
    }

    fn is_done(&self) -> bool {
        self.started && self.inner.is_done()
    }

    fn report(&self) -> Vec<(String, f64)> {
        self.inner.report()
    }

    fn attack_result(&self) -> Option<AttackResult> {
        self.inner.attack_result()
    }

    fn as_any(&self) -> &dyn Any {
        self.inner.as_any()
    }

    fn as_any_mut(&mut self) -> &mut dyn Any {
        self.inner.as_any_mut()
    }
}

#[derive(Clone, Debug)]
struct Pending {
    id: u64,
    sent_at: SimTime,
    tag: u64,
    counted: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EndpointStats {
    pub sent: u64,
    pub satisfied: u64,
    pub rejected: u64,
    pub timed_out: u64,
    pub late: u64,
    pub rtts_ms: Vec<f64>,
}

pub struct Endpoint {
    agent: Box<dyn Agent>,
    pending: BTreeMap<Name, Vec<Pending>>,
    by_id: BTreeMap<u64, Name>,
    next_id: u64,
    default_timeout: SimDuration,
    pub stats: EndpointStats,
}

impl Endpoint {
    pub fn new(agent: Box<dyn Agent>) -> Self {
        Endpoint {
            agent,
            pending: BTreeMap::new(),
            by_id: BTreeMap::new(),
            next_id: 0,
            default_timeout: SimDuration::from_secs(4),
            stats: EndpointStats::default(),
        }
    }

    pub fn with_timeout(mut self, timeout: SimDuration) -> Self {
        self.default_timeout = timeout;
        self
    }

    pub fn agent(&self) -> &dyn Agent {
        self.agent.as_ref()
    }

    pub fn agent_as<T: 'static>(&self) -> Option<&T> {
        self.agent.as_any().downcast_ref()
    }

    pub fn agent_as_mut<T: 'static>(&mut self) -> Option<&mut T> {
        self.agent.as_any_mut().downcast_mut()
    }

    /// Requests sent in the measurement window and still unanswered.
    pub fn pending_count(&self) -> u64 {
        self.pending.values().flatten().filter(|p| p.counted).count() as u64
    }

    fn with_agent<F>(&mut self, ctx: &mut HostCtx<'_>, f: F)
    where
        F: FnOnce(&mut dyn Agent, &mut AgentCtx<'_>),
    {
        let mut actx = AgentCtx {
            now: ctx.now,
            node: ctx.node,
            rng: &mut *ctx.rng,
            registry: &*ctx.registry,
            requests: Vec::new(),
            timers: Vec::new(),
            notes: Vec::new(),
        };
        f(self.agent.as_mut(), &mut actx);
        let AgentCtx { requests, timers, notes, .. } = actx;
        for (kind, name, outcome) in notes {
            ctx.note(kind, &name, outcome);
        }
        for (after, token) in timers {
            ctx.set_timer(after, token << 1);
        }
        for req in requests {
            self.send(req, ctx);
        }
    }

    fn send(&mut self, req: Request, ctx: &mut HostCtx<'_>) {
        let mut interest = req.interest;
        interest.nonce = ctx.rng.random();
        let id = self.next_id;
        self.next_id += 1;
        self.stats.sent += 1;
        let timeout = if req.timeout == SimDuration::ZERO { self.default_timeout } else { req.timeout };
        self.pending
            .entry(interest.name.clone())
            .or_default()
            .push(Pending { id, sent_at: ctx.now, tag: req.tag, counted: true });
        self.by_id.insert(id, interest.name.clone());
        ctx.set_timer(timeout, (id << 1) | 1);
        ctx.send_interest(interest);
    }
}

impl Host for Endpoint {
    fn start(&mut self, ctx: &mut HostCtx<'_>) {
        self.with_agent(ctx, |a, c| a.start(c));
    }

    fn on_data(&mut self, object: &ContentObject, ctx: &mut HostCtx<'_>) {
        let verification = ctx.registry.verify(&object.name, &object.payload, &object.signature);
        let mut replies = Vec::new();
        for len in (0..=object.name.len()).rev() {
            let key = object.name.truncated(len);
            if let Some(list) = self.pending.remove(&key) {
                for p in list {
                    self.by_id.remove(&p.id);
                    let rtt = ctx.now.since(p.sent_at);
                    if p.counted {
                        if verification.is_valid() {
                            self.stats.satisfied += 1;
                            self.stats.rtts_ms.push(rtt.as_millis_f64());
                        } else {
                            self.stats.rejected += 1;
                        }
                    }
                    replies.push(Reply {
                        requested: key.clone(),
                        object: object.clone(),
                        sent_at: p.sent_at,
                        rtt,
                        verification,
                        tag: p.tag,
                    });
                }
            }
        }
        if replies.is_empty() {
            self.stats.late += 1;
            return;
        }
        for reply in replies {
            self.with_agent(ctx, |a, c| a.on_reply(&reply, c));
        }
    }

    fn on_timer(&mut self, token: u64, ctx: &mut HostCtx<'_>) {
        if token & 1 == 0 {
            self.with_agent(ctx, |a, c| a.on_timer(token >> 1, c));
            return;
        }
        let id = token >> 1;
        let Some(name) = self.by_id.remove(&id) else { return };
        let list = self.pending.get_mut(&name).expect("indexed pending request");
        let pos = list.iter().position(|p| p.id == id).expect("indexed pending request");
        let p = list.remove(pos);
        if list.is_empty() {
            self.pending.remove(&name);
        }
        if p.counted {
            self.stats.timed_out += 1;
        }
        ctx.note("timeout", &name, "timeout");
        self.with_agent(ctx, |a, c| a.on_timeout(&name, p.tag, c));
    }

    fn is_done(&self) -> bool {
        self.agent.is_done()
    }

    fn metrics(&self) -> Vec<(String, f64)> {
        let s = &self.stats;
        let mut rows = vec![
            ("interests_sent".to_string(), s.sent as f64),
            ("satisfied".to_string(), s.satisfied as f64),
            ("rejected".to_string(), s.rejected as f64),
            ("timed_out".to_string(), s.timed_out as f64),
            ("pending".to_string(), self.pending_count() as f64),
            ("late_data".to_string(), s.late as f64),
        ];
        if s.sent > 0 {
            rows.push(("satisfaction_ratio".to_string(), s.satisfied as f64 / s.sent as f64));
        }
        if !s.rtts_ms.is_empty() {
            let mut sorted = s.rtts_ms.clone();
            sorted.sort_by(f64::total_cmp);
            let mean = sorted.iter().sum::<f64>() / sorted.len() as f64;
            rows.push(("rtt_mean_ms".to_string(), mean));
            rows.push(("rtt_min_ms".to_string(), sorted[0]));
            rows.push(("rtt_p50_ms".to_string(), sorted[sorted.len() / 2]));
            rows.push(("rtt_max_ms".to_string(), sorted[sorted.len() - 1]));
        }
        rows.extend(self.agent.report());
        rows
    }

    fn reset_metrics(&mut self) {
        self.stats = EndpointStats::default();
        for p in self.pending.values_mut().flatten() {
            p.counted = false;
        }
    }

    fn as_any(&self) -> &dyn Any {
        self
    }

    fn as_any_mut(&mut self) -> &mut dyn Any {
        self
    }
}
