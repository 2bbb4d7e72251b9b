//! Adversary procedures. Every attack is an [`Agent`] on an ordinary endpoint
//! and only ever sends interests; the `*_cache`/`*_loop` functions attach such
//! an endpoint to an edge router and drive the engine until it finishes.

mod clone;
mod enumerate;
mod flood;
mod timing;

pub use clone::{clone_conversation, CloneReport, ConversationCloner, Fetched};
pub use enumerate::{enumerate_cache, Enumeration, Enumerator};
pub use flood::{ifa_flood, poison_content, pollute_cache, FloodSpec, FloodVariant, Flooder};
pub use timing::{
    calibrate_rtt, estimate_characteristic_time, parallel_cache_probing, timing_probe_loop, Calibrator,
    ClassifierProbe, Detection, ProbeMode, RttCalibration, TcEstimate, TcEstimator, TcEstimatorConfig,
    TimingProbeState, TimingProber,
};

use crate::engine::{Agent, Engine, EngineError, NodeId};
use crate::time::{SimDuration, SimTime};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AttackError {
    #[error("calibration needs at least one sample of each kind")]
    NoSamples,
    #[error("attack did not finish before {0}")]
    Unfinished(SimTime),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// Which adversary procedure a node runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AttackVariant {
    Enumerate,
    TimingSequential,
    TimingParallel,
    CloneConversation,
    IfaSameName,
    IfaDistinctNames,
    IfaNonexistent,
    IfaCollusion,
    CachePollution,
    ContentPoisoning,
}

impl AttackVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            AttackVariant::Enumerate => "enumerate",
            AttackVariant::TimingSequential => "timing_sequential",
            AttackVariant::TimingParallel => "timing_parallel",
            AttackVariant::CloneConversation => "clone_conversation",
            AttackVariant::IfaSameName => "ifa_same_name",
            AttackVariant::IfaDistinctNames => "ifa_distinct_names",
            AttackVariant::IfaNonexistent => "ifa_nonexistent",
            AttackVariant::IfaCollusion => "ifa_collusion",
            AttackVariant::CachePollution => "cache_pollution",
            AttackVariant::ContentPoisoning => "content_poisoning",
        }
    }
}

/// Default one-way delay between an attacker and its edge router.
pub const ACCESS_DELAY: SimDuration = SimDuration::from_millis(1);

/// Adds an endpoint running `agent` one hop from `edge`.
pub fn attach(
    engine: &mut Engine,
    edge: NodeId,
    label: &str,
    delay: SimDuration,
    agent: Box<dyn Agent>,
) -> Result<NodeId, EngineError> {
    let name = format!("{label}{}", engine.node_count());
    let id = engine.add_endpoint(&name, agent)?;
    engine.link(id, edge, delay)?;
    Ok(id)
}

/// Runs until every host is done, failing after `limit` more simulated time.
pub(crate) fn drive(engine: &mut Engine, limit: SimDuration) -> Result<(), AttackError> {
    let deadline = engine.now() + limit;
    if engine.run_until_done(deadline)? {
        Ok(())
    } else {
        Err(AttackError::Unfinished(deadline))
    }
}
