//! Content origin: answers interests under its prefix with signed objects.

use std::any::Any;
use std::collections::{BTreeMap, BTreeSet};

use sha2::{Digest, Sha256};

use crate::crypto::{KeyId, KeyRegistry};
use crate::dist::DelaySpec;
use crate::engine::host::{Host, HostCtx};
use crate::names::Name;
use crate::packet::{split_segment, ContentObject, Interest};
use crate::time::{SimDuration, SimTime};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum KeyMode {
    #[default]
    LongLived,
    /// A fresh identity for every distinct content name.
    Ephemeral,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ChunkSpec {
    pub object_size: usize,
    pub chunk_size: usize,
}

impl ChunkSpec {
    pub fn total_chunks(&self) -> u32 {
        self.object_size.div_ceil(self.chunk_size.max(1)).max(1) as u32
    }

    pub fn chunk_len(&self, idx: u32) -> usize {
        let total = self.total_chunks();
        if idx + 1 < total {
            self.chunk_size
        } else {
            self.object_size - (total as usize - 1) * self.chunk_size
        }
    }
}

/// A stream of messages published one after another, e.g. a voice call.
#[derive(Clone, Debug, PartialEq)]
pub struct Conversation {
    pub prefix: Name,
    pub messages: u32,
    pub start: SimTime,
    pub interval: SimDuration,
    /// Replace the sequence number by an unpredictable token.
    pub opaque: bool,
}

impl Conversation {
    /// Name of message `k` (1-based). Opaque names are derived from a secret
    /// the two parties share; here that secret is the publishing node's name.
    pub fn message_name(&self, publisher: &str, k: u32) -> Name {
        if !self.opaque {
            return self.prefix.join(k);
        }
        let mut h = Sha256::new();
        h.update(publisher.as_bytes());
        h.update(self.prefix.to_string().as_bytes());
        h.update(k.to_le_bytes());
        self.prefix.join(&hex::encode(h.finalize())[..16])
    }

    pub fn publish_time(&self, k: u32) -> SimTime {
        self.start + SimDuration::from_micros(self.interval.as_micros() * u64::from(k - 1))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProducerConfig {
    pub prefix: Name,
    pub key_mode: KeyMode,
    pub service: DelaySpec,
    /// A colluding origin answering this slowly on purpose.
    pub colluding_slow: Option<SimDuration>,
    pub payload_size: usize,
    pub chunks: Option<ChunkSpec>,
    pub no_cache: bool,
    pub conversation: Option<Conversation>,
}

impl ProducerConfig {
    pub fn new(prefix: Name) -> Self {
        ProducerConfig {
            prefix,
            key_mode: KeyMode::LongLived,
            service: DelaySpec::fixed(SimDuration::from_millis(5)),
            colluding_slow: None,
            payload_size: 1024,
            chunks: None,
            no_cache: false,
            conversation: None,
        }
    }
}

/// Deterministic content bytes for `name`.
pub fn payload_for(name: &Name, len: usize) -> Vec<u8> {
    let seed: [u8; 32] = Sha256::digest(name.to_string().as_bytes()).into();
    let mut out = Vec::with_capacity(len);
    let mut block = seed;
    while out.len() < len {
        let take = (len - out.len()).min(32);
        out.extend_from_slice(&block[..take]);
        block = Sha256::digest(block).into();
    }
    out
}

pub struct Producer {
    config: ProducerConfig,
    key: KeyId,
    ephemeral: BTreeMap<Name, KeyId>,
    published: BTreeSet<Name>,
    scheduled: BTreeMap<Name, u32>,
    held: BTreeMap<Name, u32>,
    pub revoked: BTreeSet<Name>,
    pub served: u64,
    pub unknown: u64,
}

impl Producer {
    /// `key` is the long-lived identity registered for this producer.
    pub fn new(config: ProducerConfig, key: KeyId) -> Self {
        Producer {
            config,
            key,
            ephemeral: BTreeMap::new(),
            published: BTreeSet::new(),
            scheduled: BTreeMap::new(),
            held: BTreeMap::new(),
            revoked: BTreeSet::new(),
            served: 0,
            unknown: 0,
        }
    }

    pub fn config(&self) -> &ProducerConfig {
        &self.config
    }

    pub fn key(&self) -> KeyId {
        self.key
    }

    pub fn keys(&self) -> impl Iterator<Item = KeyId> + '_ {
        std::iter::once(self.key).chain(self.ephemeral.values().copied())
    }

    pub fn revoke(&mut self, name: Name) {
        self.revoked.insert(name);
    }

    /// Revocation oracle: is this cached copy still what the origin stands behind?
    pub fn is_fresh(&self, obj: &ContentObject) -> bool {
        !self.revoked.contains(&obj.name)
            && self.config.prefix.is_prefix_of(&obj.name)
            && self.keys().any(|k| k == obj.signature.key_id)
    }

    /// Builds the signed object for `name`, or `None` if no such content exists.
    pub fn make_object(&mut self, name: &Name, registry: &mut KeyRegistry, rng: &mut crate::rng::SimRng) -> Option<ContentObject> {
        let (payload, chunk_index, total_chunks) = match (self.config.chunks, split_segment(name)) {
            (Some(spec), Some((_, idx))) => {
                if idx >= spec.total_chunks() {
                    return None;
                }
                (payload_for(name, spec.chunk_len(idx)), Some(idx), Some(spec.total_chunks()))
            }
            _ => (payload_for(name, self.config.payload_size), None, None),
        };
        let key = match self.config.key_mode {
            KeyMode::LongLived => self.key,
            KeyMode::Ephemeral => {
                *self.ephemeral.entry(name.clone()).or_insert_with(|| registry.ephemeral_key("producer", rng))
            }
        };
        let signature = registry.sign(key, name, &payload).expect("producer keys are registered");
        Some(ContentObject { name: name.clone(), payload, signature, no_cache: self.config.no_cache, chunk_index, total_chunks })
    }

    fn delay(&self, ctx: &mut HostCtx<'_>) -> SimDuration {
        self.config.colluding_slow.unwrap_or_else(|| self.config.service.sample(ctx.rng))
    }

    fn answer(&mut self, name: &Name, ctx: &mut HostCtx<'_>) {
        match self.make_object(name, ctx.registry, ctx.rng) {
            Some(obj) => {
                self.served += 1;
                let delay = self.delay(ctx);
                ctx.send_data(obj, delay);
            }
            None => {
                self.unknown += 1;
                ctx.note("drop", name, "no_such_content");
            }
        }
    }
}

impl Host for Producer {
    fn start(&mut self, ctx: &mut HostCtx<'_>) {
        if let Some(conv) = self.config.conversation.clone() {
            for k in 1..=conv.messages {
                let name = conv.message_name(ctx.node, k);
                self.scheduled.insert(name, k);
                let at = conv.publish_time(k);
                ctx.set_timer(at.since(ctx.now), u64::from(k));
            }
        }
    }

    fn on_interest(&mut self, interest: &Interest, ctx: &mut HostCtx<'_>) {
        let name = &interest.name;
        if !self.config.prefix.is_prefix_of(name) {
            self.unknown += 1;
            ctx.note("drop", name, "no_such_content");
            return;
        }
        if let Some(conv) = &self.config.conversation {
            if conv.prefix.is_prefix_of(name) && !self.published.contains(name) {
                if self.scheduled.contains_key(name) {
                    *self.held.entry(name.clone()).or_default() += 1;
                    ctx.note("hold", name, "unpublished");
                } else {
                    self.unknown += 1;
                    ctx.note("drop", name, "no_such_content");
                }
                return;
            }
        }
        self.answer(name, ctx);
    }

    fn on_timer(&mut self, token: u64, ctx: &mut HostCtx<'_>) {
        let Some(conv) = self.config.conversation.clone() else { return };
        let name = conv.message_name(ctx.node, token as u32);
        self.published.insert(name.clone());
        ctx.note("publish", &name, "published");
        if self.held.remove(&name).is_some() {
            self.answer(&name, ctx);
        }
    }

    fn announces(&self) -> Vec<Name> {
        vec![self.config.prefix.clone()]
    }

    fn metrics(&self) -> Vec<(String, f64)> {
        vec![("served".to_string(), self.served as f64), ("no_such_content".to_string(), self.unknown as f64)]
    }

    fn reset_metrics(&mut self) {
        self.served = 0;
        self.unknown = 0;
    }

    fn as_any(&self) -> &dyn Any {
        self
    }

    fn as_any_mut(&mut self) -> &mut dyn Any {
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chunk_sizes() {
        let spec = ChunkSpec { object_size: 10_000, chunk_size: 4096 };
        assert_eq!(spec.total_chunks(), 3);
        assert_eq!(spec.chunk_len(0), 4096);
        assert_eq!(spec.chunk_len(2), 10_000 - 8192);
    }

    #[test]
    fn payload_is_deterministic() {
        let n = Name::parse("/a/b").unwrap();
        assert_eq!(payload_for(&n, 100), payload_for(&n, 100));
        assert_eq!(payload_for(&n, 100).len(), 100);
        assert_ne!(payload_for(&n, 40), payload_for(&Name::parse("/a/c").unwrap(), 40));
    }

    #[test]
    fn conversation_names() {
        let conv = Conversation {
            prefix: Name::parse("/voccn/call/alice").unwrap(),
            messages: 3,
            start: SimTime::from_millis(100),
            interval: SimDuration::from_millis(20),
            opaque: false,
        };
        assert_eq!(conv.message_name("p", 1).to_string(), "/voccn/call/alice/1");
        assert_eq!(conv.publish_time(3), SimTime::from_millis(140));
        let opaque = Conversation { opaque: true, ..conv };
        let a = opaque.message_name("p", 1);
        assert_ne!(a, opaque.message_name("p", 2));
        assert!(a.last().unwrap().parse::<u64>().is_err() || a.last().unwrap().len() == 16);
    }
}
