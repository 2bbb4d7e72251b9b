//! Legitimate consumer workloads.

use std::any::Any;

use rand::Rng;
use rand_distr::{Distribution, Zipf};

use crate::dist::exponential_gap;
use crate::engine::endpoint::{Agent, AgentCtx};
use crate::engine::producer::Conversation;
use crate::names::{ExcludeFilter, Name};
use crate::packet::{segment_component, Interest};
use crate::time::{SimDuration, SimTime};

#[derive(Clone, Debug, PartialEq)]
pub enum RequestProcess {
    Poisson { rate: f64 },
    Periodic { interval: SimDuration },
    /// Absolute request times.
    Schedule(Vec<SimTime>),
}

#[derive(Clone, Debug, PartialEq)]
pub enum NameDist {
    Fixed(Name),
    /// `prefix/<rank>` with rank drawn from Zipf(alpha) over `1..=catalog`.
    Zipf { prefix: Name, catalog: u64, alpha: f64 },
    Uniform { prefix: Name, catalog: u64 },
    /// Cycles through the list.
    Sequence(Vec<Name>),
    /// A never-repeating name per request.
    Unique { prefix: Name },
    /// `base/seg=0`, `base/seg=1`, ... in order, wrapping around.
    Chunks { base: Name, total: u32 },
    /// Message `k` of a conversation on request `k`.
    Conversation { conversation: Conversation, publisher: String },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Workload {
    pub process: RequestProcess,
    pub names: NameDist,
    pub start: SimTime,
    pub stop: Option<SimTime>,
    pub max_requests: Option<u64>,
    pub timeout: SimDuration,
    pub no_cache_request: bool,
    /// Attach a (harmless) exclude to every interest.
    pub use_exclude: bool,
}

impl Workload {
    pub fn new(process: RequestProcess, names: NameDist) -> Self {
        Workload {
            process,
            names,
            start: SimTime::ZERO,
            stop: None,
            max_requests: None,
            timeout: SimDuration::from_secs(4),
            no_cache_request: false,
            use_exclude: false,
        }
    }
}

pub struct Consumer {
    workload: Workload,
    issued: u64,
    zipf: Option<Zipf<f64>>,
}

impl Consumer {
    pub fn new(workload: Workload) -> Self {
        let zipf = match &workload.names {
            NameDist::Zipf { catalog, alpha, .. } => Zipf::new(*catalog as f64, *alpha).ok(),
            _ => None,
        };
        Consumer { workload, issued: 0, zipf }
    }

    pub fn issued(&self) -> u64 {
        self.issued
    }

    fn next_name(&mut self, ctx: &mut AgentCtx<'_>) -> Name {
        let k = self.issued;
        match &self.workload.names {
            NameDist::Fixed(n) => n.clone(),
            NameDist::Zipf { prefix, .. } => {
                let rank = self.zipf.as_ref().map_or(1.0, |z| z.sample(ctx.rng));
                prefix.join(rank as u64)
            }
            NameDist::Uniform { prefix, catalog } => prefix.join(ctx.rng.random_range(1..=(*catalog).max(1))),
            NameDist::Sequence(list) => list[(k as usize) % list.len()].clone(),
            NameDist::Unique { prefix } => prefix.join(format!("{}-{k}", ctx.node)),
            NameDist::Chunks { base, total } => base.join(segment_component((k % u64::from(*total).max(1)) as u32)),
            NameDist::Conversation { conversation, publisher } => conversation.message_name(publisher, k as u32 + 1),
        }
    }

    fn exhausted(&self, now: SimTime) -> bool {
        self.workload.max_requests.is_some_and(|m| self.issued >= m)
            || self.workload.stop.is_some_and(|s| now > s)
            || matches!(&self.workload.names, NameDist::Sequence(l) if l.is_empty())
    }

    /// Delay until the next request after `issued` requests, or `None` when done.
    fn next_gap(&self, ctx: &mut AgentCtx<'_>) -> Option<SimDuration> {
        match &self.workload.process {
            RequestProcess::Poisson { rate } => (*rate > 0.0).then(|| exponential_gap(ctx.rng, *rate)),
            RequestProcess::Periodic { interval } => Some(*interval),
            RequestProcess::Schedule(times) => times.get(self.issued as usize).map(|t| t.since(ctx.now)),
        }
    }

    fn schedule_first(&mut self, ctx: &mut AgentCtx<'_>) {
        let start = self.workload.start.max(ctx.now);
        let delay = match &self.workload.process {
            RequestProcess::Schedule(times) => match times.first() {
                Some(t) => t.max(&ctx.now).since(ctx.now),
                None => return,
            },
            RequestProcess::Poisson { rate } if *rate <= 0.0 => return,
            _ => start.since(ctx.now),
        };
        ctx.set_timer(delay, 0);
    }
}

impl Agent for Consumer {
    fn start(&mut self, ctx: &mut AgentCtx<'_>) {
        self.schedule_first(ctx);
    }

    fn on_timer(&mut self, _token: u64, ctx: &mut AgentCtx<'_>) {
        if self.exhausted(ctx.now) {
            return;
        }
        let name = self.next_name(ctx);
        let mut interest = Interest::new(name.clone(), 0);
        interest.no_cache_request = self.workload.no_cache_request;
        if self.workload.use_exclude {
            interest.exclude = ExcludeFilter::from_iter([name.join("nothing-here")]);
        }
        ctx.request(interest, self.workload.timeout, self.issued);
        self.issued += 1;
        if self.exhausted(ctx.now) {
            return;
        }
        if let Some(gap) = self.next_gap(ctx) {
            ctx.set_timer(gap, 0);
        }
    }

    fn as_any(&self) -> &dyn Any {
        self
    }

    fn as_any_mut(&mut self) -> &mut dyn Any {
        self
    }
}
