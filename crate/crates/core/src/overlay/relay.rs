//! The anonymizing relay: a host that owns a routable prefix.

use std::any::Any;
use std::collections::BTreeMap;

use crate::crypto::{seal_layer, KeyId};
use crate::engine::{Engine, EngineError, Host, HostCtx};
use crate::names::Name;
use crate::overlay::{
    blob_id, encode_object, parse_inner_name, split_entry_plain, unwrap_layer, RelayInfo, WrappedMessage, SETUP,
};
use crate::packet::{ContentObject, Interest};
use crate::time::SimDuration;

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RelayStats {
    pub setups: u64,
    pub decryptions: u64,
    pub encryptions: u64,
    pub dropped: u64,
}

/// Where returning content goes: the wrapped name we were asked for and the
/// circuit key to add on the way back.
#[derive(Clone, Debug)]
struct Back {
    asked: Name,
    key: [u8; 32],
    /// We were the exit: the returning object is the producer's own.
    exit: bool,
}

pub struct Relay {
    prefix: Name,
    key: KeyId,
    processing: SimDuration,
    circuits: BTreeMap<u64, [u8; 32]>,
    waiting: BTreeMap<Name, Vec<Back>>,
    pub stats: RelayStats,
}

impl Relay {
    pub fn new(prefix: Name, key: KeyId, processing: SimDuration) -> Self {
        Relay { prefix, key, processing, circuits: BTreeMap::new(), waiting: BTreeMap::new(), stats: RelayStats::default() }
    }

    fn drop(&mut self, name: &Name, why: &str, ctx: &mut HostCtx<'_>) {
        self.stats.dropped += 1;
        ctx.note("drop", name, why);
    }

    fn setup(&mut self, interest: &Interest, ctx: &mut HostCtx<'_>) {
        let opened = interest
            .name
            .last()
            .and_then(|c| hex::decode(c).ok())
            .and_then(|blob| ctx.registry.open(self.key, &blob))
            .filter(|msg| msg.len() == 40);
        let Some(msg) = opened else {
            self.drop(&interest.name, "bad_setup", ctx);
            return;
        };
        let id = u64::from_be_bytes(msg[..8].try_into().expect("8 bytes"));
        self.circuits.insert(id, msg[8..].try_into().expect("32 bytes"));
        self.stats.setups += 1;
        let ack = self.sign(interest.name.clone(), b"ok".to_vec(), ctx);
        ctx.send_data(ack, self.processing);
    }

    fn sign(&self, name: Name, payload: Vec<u8>, ctx: &mut HostCtx<'_>) -> ContentObject {
        let signature = ctx.registry.sign(self.key, &name, &payload).expect("relay key is registered");
        ContentObject { name, payload, signature, no_cache: false, chunk_index: None, total_chunks: None }
    }

    /// Strips this relay's layer and issues whatever is inside.
    fn forward(&mut self, interest: &Interest, ctx: &mut HostCtx<'_>) {
        let name = &interest.name;
        let Ok(msg) = WrappedMessage::parse(name) else {
            return self.drop(name, "malformed", ctx);
        };
        let Some(key) = blob_id(&msg.blob).ok().and_then(|id| self.circuits.get(&id).copied()) else {
            return self.drop(name, "unknown_circuit", ctx);
        };
        let Ok(plain) = unwrap_layer(&key, &msg.blob) else {
            return self.drop(name, "bad_layer", ctx);
        };
        self.stats.decryptions += 1;
        // An entry layer names the next relay; an exit layer is a bare content name.
        let (next, exit) = match split_entry_plain(&plain) {
            Ok(inner) => (inner.name(), false),
            Err(_) => match parse_inner_name(&plain) {
                Ok(n) => (n, true),
                Err(_) => return self.drop(name, "malformed", ctx),
            },
        };
        self.waiting.entry(next.clone()).or_default().push(Back { asked: name.clone(), key, exit });
        ctx.send_interest(Interest::new(next, 0));
    }
}

impl Host for Relay {
    fn on_interest(&mut self, interest: &Interest, ctx: &mut HostCtx<'_>) {
        if !self.prefix.is_prefix_of(&interest.name) {
            return self.drop(&interest.name, "not_mine", ctx);
        }
        if interest.name.len() == self.prefix.len() + 2 && interest.name.components()[self.prefix.len()] == SETUP {
            self.setup(interest, ctx);
        } else {
            self.forward(interest, ctx);
        }
    }

    fn on_data(&mut self, object: &ContentObject, ctx: &mut HostCtx<'_>) {
        let Some(backs) = self.waiting.remove(&object.name) else { return };
        for back in backs {
            // The exit wraps content, original name and signature; the entry
            // wraps what the exit sent.
            let inner = if back.exit { encode_object(object) } else { object.payload.clone() };
            self.stats.encryptions += 1;
            let reply = self.sign(back.asked, seal_layer(&back.key, &inner), ctx);
            ctx.send_data(reply, self.processing);
            self.circuits.retain(|_, k| *k != back.key);
        }
    }

    fn announces(&self) -> Vec<Name> {
        vec![self.prefix.clone()]
    }

    fn metrics(&self) -> Vec<(String, f64)> {
        vec![
            ("relay_setups".to_string(), self.stats.setups as f64),
            ("relay_decryptions".to_string(), self.stats.decryptions as f64),
            ("relay_encryptions".to_string(), self.stats.encryptions as f64),
            ("relay_dropped".to_string(), self.stats.dropped as f64),
        ]
    }

    fn reset_metrics(&mut self) {
        self.stats = RelayStats::default();
    }

    fn as_any(&self) -> &dyn Any {
        self
    }

    fn as_any_mut(&mut self) -> &mut dyn Any {
        self
    }
}

/// Adds a relay announcing `prefix`, with a registered long-lived key.
pub fn add_relay(engine: &mut Engine, name: &str, prefix: Name, processing: SimDuration) -> Result<RelayInfo, EngineError> {
    let mut rng = engine.streams().stream(&format!("keys/{name}"));
    let key = engine.registry.register(name, &mut rng);
    let node = engine.add_host(name, Box::new(Relay::new(prefix.clone(), key, processing)))?;
    Ok(RelayInfo { node, prefix, key })
}
