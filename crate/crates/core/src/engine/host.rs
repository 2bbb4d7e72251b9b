//! End hosts: anything attached to the network that is not a forwarding router.

use std::any::Any;

use crate::crypto::KeyRegistry;
use crate::names::Name;
use crate::packet::{ContentObject, Interest};
use crate::rng::SimRng;
use crate::time::{SimDuration, SimTime};

/// What a host asks the engine to do.
#[derive(Clone, Debug, PartialEq)]
pub enum HostOut {
    Interest(Interest),
    Data { object: ContentObject, delay: SimDuration },
    Timer { after: SimDuration, token: u64 },
    Note { kind: &'static str, name: Name, outcome: String },
}

/// Per-callback context handed to a host.
pub struct HostCtx<'a> {
    pub now: SimTime,
    pub node: &'a str,
    pub rng: &'a mut SimRng,
    pub registry: &'a mut KeyRegistry,
    pub out: Vec<HostOut>,
}

impl<'a> HostCtx<'a> {
    pub fn new(now: SimTime, node: &'a str, rng: &'a mut SimRng, registry: &'a mut KeyRegistry) -> Self {
        HostCtx { now, node, rng, registry, out: Vec::new() }
    }

    pub fn send_interest(&mut self, interest: Interest) {
        self.out.push(HostOut::Interest(interest));
    }

    pub fn send_data(&mut self, object: ContentObject, delay: SimDuration) {
        self.out.push(HostOut::Data { object, delay });
    }

    pub fn set_timer(&mut self, after: SimDuration, token: u64) {
        self.out.push(HostOut::Timer { after, token });
    }

    pub fn note(&mut self, kind: &'static str, name: &Name, outcome: impl Into<String>) {
        self.out.push(HostOut::Note { kind, name: name.clone(), outcome: outcome.into() });
    }
}

/// Behavior of a non-router node. Every host has a single face toward the network.
pub trait Host: Send {
    fn start(&mut self, _ctx: &mut HostCtx<'_>) {}
    fn on_interest(&mut self, _interest: &Interest, _ctx: &mut HostCtx<'_>) {}
    fn on_data(&mut self, _object: &ContentObject, _ctx: &mut HostCtx<'_>) {}
    fn on_timer(&mut self, _token: u64, _ctx: &mut HostCtx<'_>) {}
    /// Name prefixes this host answers for (used to build routes).
    fn announces(&self) -> Vec<Name> {
        Vec::new()
    }
    /// Whether the host has finished its own work (attacks stop the run early).
    fn is_done(&self) -> bool {
        true
    }
    fn metrics(&self) -> Vec<(String, f64)> {
        Vec::new()
    }
    /// Start of the measurement window: forget counters accumulated so far.
    fn reset_metrics(&mut self) {}
    fn as_any(&self) -> &dyn Any;
    fn as_any_mut(&mut self) -> &mut dyn Any;
}
