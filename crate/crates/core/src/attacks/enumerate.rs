//! Cache enumeration through non-invasive prefix queries with a growing
//! exclude set.

use std::any::Any;

use crate::attacks::{attach, drive, AttackError, AttackVariant, ACCESS_DELAY};
use crate::engine::{Agent, AgentCtx, AttackResult, Engine, NodeId, Reply};
use crate::names::{ExcludeFilter, Name};
use crate::packet::Interest;
use crate::time::SimDuration;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Enumeration {
    pub names: Vec<Name>,
    pub queries: u64,
    /// The router ignored the exclude filter (a repeated answer).
    pub blocked: bool,
}

pub struct Enumerator {
    prefix: Name,
    limit: usize,
    miss_timeout: SimDuration,
    exclude: ExcludeFilter,
    pub result: Enumeration,
    done: bool,
}

impl Enumerator {
    /// `miss_timeout` is how long to wait before treating silence as "nothing
    /// left"; it must exceed the round trip to the edge router.
    pub fn new(prefix: Name, limit: usize, miss_timeout: SimDuration) -> Self {
        Enumerator {
            prefix,
            limit,
            miss_timeout,
            exclude: ExcludeFilter::new(),
            result: Enumeration::default(),
            done: false,
        }
    }

    fn query(&mut self, ctx: &mut AgentCtx<'_>) {
        let interest = Interest::new(self.prefix.clone(), 0).non_invasive().with_exclude(self.exclude.clone());
        self.result.queries += 1;
        ctx.request(interest, self.miss_timeout, self.result.queries);
    }
}

impl Agent for Enumerator {
    fn start(&mut self, ctx: &mut AgentCtx<'_>) {
        if self.limit == 0 {
            self.done = true;
            return;
        }
        self.query(ctx);
    }

    fn on_reply(&mut self, reply: &Reply, ctx: &mut AgentCtx<'_>) {
        if self.done {
            return;
        }
        let name = reply.object.name.clone();
        if !self.exclude.insert(name.clone()) {
            self.result.blocked = true;
            self.done = true;
            return;
        }
        self.result.names.push(name);
        if self.result.names.len() >= self.limit {
            self.done = true;
        } else {
            self.query(ctx);
        }
    }

    fn on_timeout(&mut self, _name: &Name, _tag: u64, _ctx: &mut AgentCtx<'_>) {
        self.done = true;
    }

    fn is_done(&self) -> bool {
        self.done
    }

    fn report(&self) -> Vec<(String, f64)> {
        vec![
            ("enumerated".to_string(), self.result.names.len() as f64),
            ("enum_queries".to_string(), self.result.queries as f64),
        ]
    }

    fn attack_result(&self) -> Option<AttackResult> {
        Some(AttackResult {
            variant: AttackVariant::Enumerate.as_str().to_string(),
            params: format!("prefix={};limit={}", self.prefix, self.limit),
            metric: "names_found".to_string(),
            value: self.result.names.len() as f64,
            aux: vec![
                ("queries".to_string(), self.result.queries.to_string()),
                ("blocked".to_string(), self.result.blocked.to_string()),
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

/// Lists up to `limit` cached names under `prefix` at router `edge`.
pub fn enumerate_cache(engine: &mut Engine, edge: NodeId, prefix: &Name, limit: usize) -> Result<Enumeration, AttackError> {
    let agent = Enumerator::new(prefix.clone(), limit, SimDuration::from_millis(100));
    let id = attach(engine, edge, "enumerator", ACCESS_DELAY, Box::new(agent))?;
    drive(engine, SimDuration::from_secs(3600))?;
    Ok(engine.agent::<Enumerator>(id).expect("attached above").result.clone())
}
