//! Conversation cloning: enumerate a live conversation from a cache, then
//! predict and fetch its upcoming messages.

use std::any::Any;

use crate::attacks::{attach, drive, AttackError, AttackVariant, ACCESS_DELAY};
use crate::engine::{Agent, AgentCtx, AttackResult, Engine, NodeId, Reply};
use crate::names::{ExcludeFilter, Name};
use crate::packet::Interest;
use crate::time::{SimDuration, SimTime};

/// One message the attacker obtained, with its timing side information.
#[derive(Clone, Debug, PartialEq)]
pub struct Fetched {
    pub name: Name,
    pub at: SimTime,
    pub size: usize,
    /// Learned from the cache snapshot rather than predicted.
    pub from_snapshot: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CloneReport {
    pub snapshot: Vec<Name>,
    pub fetched: Vec<Fetched>,
    /// Names could not be extrapolated (or enumeration was refused).
    pub blocked: bool,
}

impl CloneReport {
    pub fn predicted(&self) -> usize {
        self.fetched.iter().filter(|f| !f.from_snapshot).count()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Phase {
    Enumerate,
    Snapshot,
    Follow,
    Done,
}

const ENUM: u64 = 0;
const SNAP: u64 = 1;
const FOLLOW: u64 = 2;

pub struct ConversationCloner {
    prefix: Name,
    until: SimTime,
    follow_timeout: SimDuration,
    phase: Phase,
    exclude: ExcludeFilter,
    to_fetch: Vec<Name>,
    next_seq: u64,
    pub report: CloneReport,
}

impl ConversationCloner {
    pub fn new(prefix: Name, until: SimTime) -> Self {
        ConversationCloner {
            prefix,
            until,
            follow_timeout: SimDuration::from_secs(2),
            phase: Phase::Enumerate,
            exclude: ExcludeFilter::new(),
            to_fetch: Vec::new(),
            next_seq: 0,
            report: CloneReport::default(),
        }
    }

    fn enumerate(&mut self, ctx: &mut AgentCtx<'_>) {
        let i = Interest::new(self.prefix.clone(), 0).non_invasive().with_exclude(self.exclude.clone());
        ctx.request(i, SimDuration::from_millis(100), ENUM);
    }

    fn after_enumeration(&mut self, ctx: &mut AgentCtx<'_>) {
        let seqs: Option<Vec<u64>> =
            self.report.snapshot.iter().map(|n| n.last().and_then(|c| c.parse::<u64>().ok())).collect();
        match seqs {
            Some(s) if !s.is_empty() => {
                self.next_seq = s.iter().max().expect("non-empty") + 1;
                self.to_fetch = self.report.snapshot.clone();
                self.to_fetch.reverse();
                self.phase = Phase::Snapshot;
                self.snapshot_step(ctx);
            }
            _ => {
                self.report.blocked = true;
                self.phase = Phase::Done;
            }
        }
    }

    fn snapshot_step(&mut self, ctx: &mut AgentCtx<'_>) {
        match self.to_fetch.pop() {
            Some(n) => ctx.fetch(n, SNAP),
            None => {
                self.phase = Phase::Follow;
                self.follow(ctx);
            }
        }
    }

    fn follow(&mut self, ctx: &mut AgentCtx<'_>) {
        if ctx.now >= self.until {
            self.phase = Phase::Done;
            return;
        }
        let name = self.prefix.join(self.next_seq);
        ctx.request(Interest::new(name, 0), self.follow_timeout, FOLLOW);
    }
}

impl Agent for ConversationCloner {
    fn start(&mut self, ctx: &mut AgentCtx<'_>) {
        self.enumerate(ctx);
    }

    fn on_reply(&mut self, reply: &Reply, ctx: &mut AgentCtx<'_>) {
        let name = reply.object.name.clone();
        match (self.phase, reply.tag) {
            (Phase::Enumerate, ENUM) => {
                if self.exclude.insert(name.clone()) {
                    self.report.snapshot.push(name);
                    self.enumerate(ctx);
                } else {
                    self.after_enumeration(ctx);
                }
            }
            (Phase::Snapshot, SNAP) => {
                self.report.fetched.push(Fetched { name, at: ctx.now, size: reply.object.payload_size(), from_snapshot: true });
                self.snapshot_step(ctx);
            }
            (Phase::Follow, FOLLOW) => {
                self.report.fetched.push(Fetched { name, at: ctx.now, size: reply.object.payload_size(), from_snapshot: false });
                self.next_seq += 1;
                self.follow(ctx);
            }
            _ => {}
        }
    }

    fn on_timeout(&mut self, _name: &Name, tag: u64, ctx: &mut AgentCtx<'_>) {
        match (self.phase, tag) {
            (Phase::Enumerate, ENUM) => self.after_enumeration(ctx),
            (Phase::Snapshot, SNAP) => self.snapshot_step(ctx),
            // Not published yet (or the conversation ended): ask again.
            (Phase::Follow, FOLLOW) => self.follow(ctx),
            _ => {}
        }
    }

    fn is_done(&self) -> bool {
        self.phase == Phase::Done
    }

    fn report(&self) -> Vec<(String, f64)> {
        vec![
            ("cloned_messages".to_string(), self.report.fetched.len() as f64),
            ("cloned_predicted".to_string(), self.report.predicted() as f64),
        ]
    }

    fn attack_result(&self) -> Option<AttackResult> {
        Some(AttackResult {
            variant: AttackVariant::CloneConversation.as_str().to_string(),
            params: format!("prefix={}", self.prefix),
            metric: "messages_fetched".to_string(),
            value: self.report.fetched.len() as f64,
            aux: vec![
                ("snapshot".to_string(), self.report.snapshot.len().to_string()),
                ("predicted".to_string(), self.report.predicted().to_string()),
                ("blocked".to_string(), self.report.blocked.to_string()),
            ],
        })
    }

    fn as_any(&self) -> &dyn Any {
        self
    }

    fn as_any_mut(&mut self) -> &mut dyn Any {
        self
    }
}

/// Clones the conversation under `prefix` through router `edge`, following
/// it until `until`.
pub fn clone_conversation(engine: &mut Engine, edge: NodeId, prefix: &Name, until: SimTime) -> Result<CloneReport, AttackError> {
    let id = attach(engine, edge, "cloner", ACCESS_DELAY, Box::new(ConversationCloner::new(prefix.clone(), until)))?;
    drive(engine, until.since(engine.now()) + SimDuration::from_secs(60))?;
    Ok(engine.agent::<ConversationCloner>(id).expect("attached above").report.clone())
}
