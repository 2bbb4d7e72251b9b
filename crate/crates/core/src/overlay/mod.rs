//! Two-hop anonymizing overlay: one-shot circuits through a pair of
//! anonymizing relays with layered symmetric encryption.
//!
//! A wrapped interest is named `<entry prefix>/<hex blob>`. The entry relay
//! strips its layer and finds the exit prefix plus the exit's blob; the exit
//! strips the last layer and issues the plain interest. Content comes back
//! the same way, gaining one layer (and a relay signature) per hop.

mod relay;

pub use relay::{add_relay, Relay, RelayStats};

use std::any::Any;

use rand::Rng;

use crate::crypto::{open_layer, seal_layer, KeyId, KeyRegistry, Signature, Verification};
use crate::engine::{Agent, AgentCtx, Engine, NodeId, Reply};
use crate::names::Name;
use crate::packet::{ContentObject, Interest};
use crate::time::{SimDuration, SimTime};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum OverlayError {
    #[error("need at least two anonymizing relays, directory has {0}")]
    TooFewRelays(usize),
    #[error("circuit already carried its one interest")]
    CircuitUsed,
    #[error("circuit is closed")]
    CircuitClosed,
    #[error("layer does not decrypt under this key")]
    BadLayer,
    #[error("malformed overlay message")]
    Malformed,
}

/// A relay as listed in the public directory.
#[derive(Clone, Debug, PartialEq)]
pub struct RelayInfo {
    pub node: NodeId,
    pub prefix: Name,
    pub key: KeyId,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CircuitState {
    Fresh,
    Used,
    Closed,
}

/// Per-relay half of a circuit: the lookup id the relay sees and its key.
#[derive(Clone, Debug, PartialEq)]
pub struct Hop {
    pub relay: RelayInfo,
    pub id: u64,
    pub key: [u8; 32],
}

#[derive(Clone, Debug, PartialEq)]
pub struct Circuit {
    pub entry: Hop,
    pub exit: Hop,
    state: CircuitState,
}

impl Circuit {
    pub fn state(&self) -> CircuitState {
        self.state
    }

    pub fn close(&mut self) {
        self.state = CircuitState::Closed;
    }

    /// Key-setup interests, one per relay, each sealed for that relay alone.
    pub fn setup_interests(&self, registry: &KeyRegistry) -> Vec<Interest> {
        [&self.entry, &self.exit]
            .into_iter()
            .map(|hop| {
                let mut msg = hop.id.to_be_bytes().to_vec();
                msg.extend_from_slice(&hop.key);
                let sealed = registry.seal(hop.relay.key, &msg).expect("directory keys are registered");
                Interest::new(hop.relay.prefix.join(SETUP).join(hex::encode(sealed)), 0)
            })
            .collect()
    }
}

pub(crate) const SETUP: &str = "setup";

/// Picks two distinct relays and fresh keys.
pub fn build_circuit<R: Rng + ?Sized>(directory: &[RelayInfo], rng: &mut R) -> Result<Circuit, OverlayError> {
    if directory.len() < 2 {
        return Err(OverlayError::TooFewRelays(directory.len()));
    }
    let a = rng.random_range(0..directory.len());
    let mut b = rng.random_range(0..directory.len() - 1);
    if b >= a {
        b += 1;
    }
    let mut hop = |i: usize| Hop { relay: directory[i].clone(), id: rng.random(), key: rng.random() };
    let entry = hop(a);
    let exit = hop(b);
    Ok(Circuit { entry, exit, state: CircuitState::Fresh })
}

/// An interest as it leaves the consumer: a routable prefix and an opaque blob.
#[derive(Clone, Debug, PartialEq)]
pub struct WrappedMessage {
    pub prefix: Name,
    pub blob: Vec<u8>,
}

impl WrappedMessage {
    pub fn name(&self) -> Name {
        self.prefix.join(hex::encode(&self.blob))
    }

    pub fn into_interest(self) -> Interest {
        Interest::new(self.name(), 0)
    }

    /// Splits `<prefix>/<hex>`; the prefix is everything but the last component.
    pub fn parse(name: &Name) -> Result<Self, OverlayError> {
        let blob = name.last().and_then(|c| hex::decode(c).ok()).ok_or(OverlayError::Malformed)?;
        Ok(WrappedMessage { prefix: name.parent(), blob })
    }
}

fn layer(hop: &Hop, inner: &[u8]) -> Vec<u8> {
    let mut blob = hop.id.to_be_bytes().to_vec();
    blob.extend(seal_layer(&hop.key, inner));
    blob
}

/// Id of the circuit a blob belongs to (in clear, so the relay can find its key).
pub fn blob_id(blob: &[u8]) -> Result<u64, OverlayError> {
    let head: [u8; 8] = blob.get(..8).and_then(|h| h.try_into().ok()).ok_or(OverlayError::Malformed)?;
    Ok(u64::from_be_bytes(head))
}

/// Removes the layer a relay holding `key` is responsible for.
pub fn unwrap_layer(key: &[u8; 32], blob: &[u8]) -> Result<Vec<u8>, OverlayError> {
    blob_id(blob)?;
    open_layer(key, &blob[8..]).ok_or(OverlayError::BadLayer)
}

/// Encrypts the name under the exit key, then (with the exit's prefix) under
/// the entry key. A circuit carries exactly one interest.
pub fn wrap_interest(circuit: &mut Circuit, interest: &Interest) -> Result<WrappedMessage, OverlayError> {
    match circuit.state {
        CircuitState::Fresh => {}
        CircuitState::Used => return Err(OverlayError::CircuitUsed),
        CircuitState::Closed => return Err(OverlayError::CircuitClosed),
    }
    let exit_blob = layer(&circuit.exit, interest.name.to_string().as_bytes());
    let mut entry_plain = circuit.exit.relay.prefix.to_string().into_bytes();
    entry_plain.push(0);
    entry_plain.extend(exit_blob);
    circuit.state = CircuitState::Used;
    Ok(WrappedMessage { prefix: circuit.entry.relay.prefix.clone(), blob: layer(&circuit.entry, &entry_plain) })
}

/// What the entry relay learns: where to send the rest.
pub(crate) fn split_entry_plain(plain: &[u8]) -> Result<WrappedMessage, OverlayError> {
    let cut = plain.iter().position(|&b| b == 0).ok_or(OverlayError::Malformed)?;
    let prefix = std::str::from_utf8(&plain[..cut]).ok().and_then(|s| Name::parse(s).ok()).ok_or(OverlayError::Malformed)?;
    Ok(WrappedMessage { prefix, blob: plain[cut + 1..].to_vec() })
}

pub(crate) fn parse_inner_name(plain: &[u8]) -> Result<Name, OverlayError> {
    std::str::from_utf8(plain).ok().and_then(|s| Name::parse(s).ok()).ok_or(OverlayError::Malformed)
}

fn put(buf: &mut Vec<u8>, bytes: &[u8]) {
    buf.extend_from_slice(&(bytes.len() as u32).to_be_bytes());
    buf.extend_from_slice(bytes);
}

fn take<'a>(buf: &mut &'a [u8]) -> Result<&'a [u8], OverlayError> {
    let len = buf.get(..4).ok_or(OverlayError::Malformed)?;
    let len = u32::from_be_bytes(len.try_into().expect("4 bytes")) as usize;
    let body = buf.get(4..4 + len).ok_or(OverlayError::Malformed)?;
    *buf = &buf[4 + len..];
    Ok(body)
}

/// Content, original name and signature, as carried inside the layers.
pub fn encode_object(obj: &ContentObject) -> Vec<u8> {
    let mut buf = Vec::new();
    put(&mut buf, obj.name.to_string().as_bytes());
    put(&mut buf, &obj.payload);
    buf.extend_from_slice(&obj.signature.key_id.0);
    buf.extend_from_slice(&obj.signature.digest);
    buf
}

pub fn decode_object(mut buf: &[u8]) -> Result<ContentObject, OverlayError> {
    let name = parse_inner_name(take(&mut buf)?)?;
    let payload = take(&mut buf)?.to_vec();
    if buf.len() != 40 {
        return Err(OverlayError::Malformed);
    }
    let key_id = KeyId(buf[..8].try_into().expect("8 bytes"));
    let digest = buf[8..].try_into().expect("32 bytes");
    Ok(ContentObject {
        name,
        payload,
        signature: Signature { key_id, digest },
        no_cache: false,
        chunk_index: None,
        total_chunks: None,
    })
}

/// Strips both return-path layers from a payload the entry relay sent back.
pub fn unwrap_content(circuit: &Circuit, payload: &[u8]) -> Result<ContentObject, OverlayError> {
    let middle = open_layer(&circuit.entry.key, payload).ok_or(OverlayError::BadLayer)?;
    let inner = open_layer(&circuit.exit.key, &middle).ok_or(OverlayError::BadLayer)?;
    decode_object(&inner)
}

/// A content fetch completed through a circuit.
#[derive(Clone, Debug, PartialEq)]
pub struct OverlayFetch {
    pub name: Name,
    pub started: SimTime,
    /// From the first key-setup message to the unwrapped content.
    pub rtt: SimDuration,
    pub object: ContentObject,
    pub verification: Verification,
}

struct Slot {
    name: Name,
    circuit: Option<Circuit>,
    started: SimTime,
    acks: u8,
    resolved: bool,
}

const TAG_SETUP: u64 = 0;
const TAG_FETCH: u64 = 2;

/// A consumer that fetches every name through its own fresh circuit.
pub struct OverlayConsumer {
    directory: Vec<RelayInfo>,
    requests: Vec<(SimTime, Name)>,
    slots: Vec<Slot>,
    timeout: SimDuration,
    pub fetched: Vec<OverlayFetch>,
    pub failures: u64,
}

impl OverlayConsumer {
    pub fn new(directory: Vec<RelayInfo>, requests: Vec<(SimTime, Name)>) -> Self {
        OverlayConsumer {
            directory,
            requests,
            slots: Vec::new(),
            timeout: SimDuration::from_secs(4),
            fetched: Vec::new(),
            failures: 0,
        }
    }

    fn fail(&mut self, i: usize) {
        let slot = &mut self.slots[i];
        if !slot.resolved {
            slot.resolved = true;
            if let Some(c) = slot.circuit.as_mut() {
                c.close();
            }
            self.failures += 1;
        }
    }
}

impl Agent for OverlayConsumer {
    fn start(&mut self, ctx: &mut AgentCtx<'_>) {
        for (i, (at, name)) in self.requests.iter().enumerate() {
            self.slots.push(Slot { name: name.clone(), circuit: None, started: *at, acks: 0, resolved: false });
            ctx.set_timer(at.max(&ctx.now).since(ctx.now), i as u64);
        }
    }

    fn on_timer(&mut self, token: u64, ctx: &mut AgentCtx<'_>) {
        let i = token as usize;
        match build_circuit(&self.directory, ctx.rng) {
            Ok(circuit) => {
                for interest in circuit.setup_interests(ctx.registry) {
                    ctx.request(interest, self.timeout, (token << 2) | TAG_SETUP);
                }
                self.slots[i].started = ctx.now;
                self.slots[i].circuit = Some(circuit);
            }
            Err(_) => self.fail(i),
        }
    }

    fn on_reply(&mut self, reply: &Reply, ctx: &mut AgentCtx<'_>) {
        let i = (reply.tag >> 2) as usize;
        let Some(slot) = self.slots.get_mut(i) else { return };
        if slot.resolved {
            return;
        }
        let Some(circuit) = slot.circuit.as_mut() else { return };
        if reply.tag & 3 == TAG_SETUP {
            slot.acks += 1;
            if slot.acks == 2 {
                let inner = Interest::new(slot.name.clone(), 0);
                match wrap_interest(circuit, &inner) {
                    Ok(w) => ctx.request(w.into_interest(), self.timeout, ((i as u64) << 2) | TAG_FETCH),
                    Err(_) => self.fail(i),
                }
            }
            return;
        }
        match unwrap_content(circuit, &reply.object.payload) {
            Ok(object) => {
                circuit.close();
                slot.resolved = true;
                let verification = ctx.registry.verify(&object.name, &object.payload, &object.signature);
                self.fetched.push(OverlayFetch {
                    name: slot.name.clone(),
                    started: slot.started,
                    rtt: ctx.now.since(slot.started),
                    object,
                    verification,
                });
            }
            Err(_) => self.fail(i),
        }
    }

    fn on_timeout(&mut self, _name: &Name, tag: u64, _ctx: &mut AgentCtx<'_>) {
        self.fail((tag >> 2) as usize);
    }

    fn is_done(&self) -> bool {
        self.slots.len() == self.requests.len() && self.slots.iter().all(|s| s.resolved)
    }

    fn report(&self) -> Vec<(String, f64)> {
        let mut rows = vec![
            ("overlay_fetched".to_string(), self.fetched.len() as f64),
            ("overlay_failures".to_string(), self.failures as f64),
        ];
        if !self.fetched.is_empty() {
            let mean = self.fetched.iter().map(|f| f.rtt.as_millis_f64()).sum::<f64>() / self.fetched.len() as f64;
            rows.push(("overlay_rtt_mean_ms".to_string(), mean));
        }
        rows
    }

    fn as_any(&self) -> &dyn Any {
        self
    }

    fn as_any_mut(&mut self) -> &mut dyn Any {
        self
    }
}

/// Cost of anonymity, from a direct run and an overlay run of the same requests.
#[derive(Clone, Debug, PartialEq)]
pub struct OverheadReport {
    pub direct_rtt_ms: f64,
    pub overlay_rtt_ms: f64,
    pub rtt_ratio: f64,
    /// Router cache hit rate for the plain content names in the direct run.
    pub direct_hit_rate: f64,
    /// Router cache hit rate for wrapped names in the overlay run.
    pub wrapped_hit_rate: f64,
}

/// Hit rate over router interest records whose name starts with one of
/// `prefixes`. Needs a kept trace; `None` without lookups.
pub fn trace_hit_rate(engine: &Engine, prefixes: &[Name]) -> Option<f64> {
    let routers: std::collections::BTreeSet<&str> = engine.router_ids().into_iter().map(|r| engine.node_name(r)).collect();
    let (mut lookups, mut hits) = (0u64, 0u64);
    for rec in engine.trace()?.records() {
        if rec.kind != "interest" || !routers.contains(rec.node.as_str()) {
            continue;
        }
        let Ok(name) = Name::parse(&rec.name) else { continue };
        if prefixes.iter().any(|p| p.is_prefix_of(&name)) {
            lookups += 1;
            hits += u64::from(rec.outcome == "hit");
        }
    }
    (lookups > 0).then(|| hits as f64 / lookups as f64)
}

/// Compares a finished direct run (consumer `direct` fetching names under
/// `content`) with a finished overlay run (overlay consumer `overlay`).
pub fn measure_overhead(
    direct_engine: &Engine,
    direct: NodeId,
    content: &Name,
    overlay_engine: &Engine,
    overlay: NodeId,
    directory: &[RelayInfo],
) -> Option<OverheadReport> {
    let stats = &direct_engine.endpoint(direct)?.stats;
    let direct_rtt_ms = stats.rtts_ms.iter().sum::<f64>() / stats.rtts_ms.len().max(1) as f64;
    let fetched = &overlay_engine.agent::<OverlayConsumer>(overlay)?.fetched;
    if fetched.is_empty() || stats.rtts_ms.is_empty() {
        return None;
    }
    let overlay_rtt_ms = fetched.iter().map(|f| f.rtt.as_millis_f64()).sum::<f64>() / fetched.len() as f64;
    let relay_prefixes: Vec<Name> = directory.iter().map(|r| r.prefix.clone()).collect();
    Some(OverheadReport {
        direct_rtt_ms,
        overlay_rtt_ms,
        rtt_ratio: overlay_rtt_ms / direct_rtt_ms,
        direct_hit_rate: trace_hit_rate(direct_engine, std::slice::from_ref(content)).unwrap_or(0.0),
        wrapped_hit_rate: trace_hit_rate(overlay_engine, &relay_prefixes).unwrap_or(0.0),
    })
}
