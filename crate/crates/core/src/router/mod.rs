//! The forwarding node: content store, PIT, FIB and the interest/data pipeline.

mod cs;
mod fib;
mod limiter;
mod pit;

use std::collections::{BTreeMap, BTreeSet};

pub use cs::{
    CachePolicy, ContentStore, CsConfig, CsEntry, InsertOutcome, InsertSkip, Lookup, Removal, RemovalCause,
};
pub use fib::Fib;
pub use limiter::{DomainLimiter, RateLimit};
pub use pit::{Pit, PitEntry, PitOutcome};

use crate::crypto::{KeyId, KeyRegistry, Signature, Verification};
use crate::defenses::{DefenseState, FaceStats};
use crate::dist::DelaySpec;
use crate::names::Name;
use crate::packet::{split_segment, ContentObject, FaceId, Interest};
use crate::rng::{RngStreams, SimRng};
use crate::time::{SimDuration, SimTime};

#[derive(Clone, Debug, PartialEq)]
pub struct RouterConfig {
    pub verify_signatures: bool,
    /// Simulated CPU time per signature check.
    pub verify_cost: SimDuration,
    pub honor_no_cache: bool,
    pub allow_non_invasive: bool,
    pub allow_exclude: bool,
    /// When off, a face may only ask for segment `i > 0` of an object right
    /// after asking for segment `i - 1` (in-order fetching).
    pub allow_chunk_requests: bool,
    pub chunk_window: SimDuration,
    pub hit_delay: DelaySpec,
    pub per_domain_limit: Option<RateLimit>,
    pub pit_capacity: Option<usize>,
    pub pit_timeout: SimDuration,
    pub cs: CsConfig,
    /// Data signed under these keys is dropped (a censoring router).
    pub censor_keys: BTreeSet<KeyId>,
}

impl Default for RouterConfig {
    fn default() -> Self {
        RouterConfig {
            verify_signatures: false,
            verify_cost: SimDuration::from_micros(50),
            honor_no_cache: true,
            allow_non_invasive: true,
            allow_exclude: true,
            allow_chunk_requests: true,
            chunk_window: SimDuration::from_secs(2),
            hit_delay: DelaySpec::ZERO,
            per_domain_limit: None,
            pit_capacity: None,
            pit_timeout: SimDuration::from_secs(4),
            cs: CsConfig::default(),
            censor_keys: BTreeSet::new(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DropReason {
    FaceBlocked,
    ChunkBlocked,
    RateLimited,
    DuplicateNonce,
    NonInvasiveMiss,
    PitOverflow,
    NoRoute,
    Unsolicited,
    PoisonBlocked,
    Censored,
}

impl DropReason {
    pub fn as_str(self) -> &'static str {
        match self {
            DropReason::FaceBlocked => "face_blocked",
            DropReason::ChunkBlocked => "chunk_blocked",
            DropReason::RateLimited => "rate_limited",
            DropReason::DuplicateNonce => "duplicate_nonce",
            DropReason::NonInvasiveMiss => "non_invasive_miss",
            DropReason::PitOverflow => "pit_overflow",
            DropReason::NoRoute => "no_route",
            DropReason::Unsolicited => "unsolicited",
            DropReason::PoisonBlocked => "poison_block",
            DropReason::Censored => "censored",
        }
    }
}

/// What the router asks the engine to do, plus bookkeeping notes for the trace.
#[derive(Clone, Debug, PartialEq)]
pub enum Action {
    Forward { face: FaceId, interest: Interest },
    SendData { face: FaceId, object: ContentObject, delay: SimDuration },
    Drop { name: Name, reason: DropReason },
    Aggregated { name: Name },
    Hit { name: Name },
    Cached { name: Name },
    Evicted { name: Name },
}

/// Substitution performed by a compromised router on the data it relays.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PoisonSpec {
    pub prefix: Name,
    pub mode: PoisonMode,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PoisonMode {
    /// Tampered payload under the genuine signature (verifies as invalid).
    Tampered,
    /// Signed under a key nobody registered (verifies as unverifiable).
    Unverifiable,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RouterCounters {
    pub interests_in: u64,
    pub data_in: u64,
    pub lookups: u64,
    pub hits: u64,
    pub forwarded: u64,
    pub aggregated: u64,
    pub data_sent: u64,
    pub cache_inserts: u64,
    pub evictions: u64,
    pub verifications: u64,
    pub exclude_ignored: u64,
    pub poisoned: u64,
    /// CPU queueing plus verification delay, summed over data that matched
    /// the PIT (dropped or forwarded).
    pub processing_us: u64,
    pub processed_data: u64,
    pub drops: BTreeMap<DropReason, u64>,
    pub pit_peak: usize,
    pub pit_samples: u64,
    pub pit_sum: u64,
    pub per_face: BTreeMap<FaceId, FaceTally>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct FaceTally {
    pub lookups: u64,
    pub hits: u64,
}

impl RouterCounters {
    pub fn hit_rate(&self) -> Option<f64> {
        (self.lookups > 0).then(|| self.hits as f64 / self.lookups as f64)
    }

    pub fn pit_mean(&self) -> Option<f64> {
        (self.pit_samples > 0).then(|| self.pit_sum as f64 / self.pit_samples as f64)
    }

    pub fn processing_mean_us(&self) -> Option<f64> {
        (self.processed_data > 0).then(|| self.processing_us as f64 / self.processed_data as f64)
    }

    pub fn dropped(&self, reason: DropReason) -> u64 {
        self.drops.get(&reason).copied().unwrap_or(0)
    }
}

#[derive(Clone, Debug)]
pub struct Router {
    config: RouterConfig,
    pub fib: Fib,
    pit: Pit,
    cs: ContentStore,
    limiter: Option<DomainLimiter>,
    cache_rng: SimRng,
    delay_rng: SimRng,
    busy_until: SimTime,
    chunk_history: BTreeMap<(FaceId, Name), (u32, SimTime)>,
    pub counters: RouterCounters,
    pub face_stats: Option<FaceStats>,
    pub defense: DefenseState,
    pub poison: Option<PoisonSpec>,
}

impl Router {
    /// `label` names the router's random substreams.
    pub fn new(config: RouterConfig, streams: &RngStreams, label: &str) -> Self {
        Router {
            pit: Pit::new(config.pit_capacity, config.pit_timeout),
            cs: ContentStore::new(config.cs.clone()),
            limiter: config.per_domain_limit.map(DomainLimiter::new),
            cache_rng: streams.stream(&format!("cache/{label}")),
            delay_rng: streams.stream(&format!("hit_delay/{label}")),
            busy_until: SimTime::ZERO,
            chunk_history: BTreeMap::new(),
            counters: RouterCounters::default(),
            face_stats: None,
            defense: DefenseState::default(),
            poison: None,
            fib: Fib::new(),
            config,
        }
    }

    pub fn config(&self) -> &RouterConfig {
        &self.config
    }

    /// Drops data signed under `key` from now on.
    pub fn censor(&mut self, key: KeyId) {
        self.config.censor_keys.insert(key);
    }

    pub fn cs(&self) -> &ContentStore {
        &self.cs
    }

    pub fn cs_mut(&mut self) -> &mut ContentStore {
        &mut self.cs
    }

    pub fn pit(&self) -> &Pit {
        &self.pit
    }

    fn drop(&mut self, out: &mut Vec<Action>, name: &Name, reason: DropReason) {
        *self.counters.drops.entry(reason).or_default() += 1;
        out.push(Action::Drop { name: name.clone(), reason });
    }

    fn note_pit(&mut self) {
        self.counters.pit_peak = self.counters.pit_peak.max(self.pit.len());
    }

    /// Records one PIT occupancy sample for the mean.
    pub fn sample_pit(&mut self) {
        self.counters.pit_samples += 1;
        self.counters.pit_sum += self.pit.len() as u64;
        self.note_pit();
    }

    pub fn pit_expire(&mut self, now: SimTime) -> usize {
        self.pit.expire(now)
    }

    fn chunk_allowed(&mut self, interest: &Interest, face: FaceId, now: SimTime) -> bool {
        let Some((base, idx)) = split_segment(&interest.name) else { return true };
        let prev = self.chunk_history.get(&(face, base.clone())).copied();
        let ok = idx == 0
            || prev.is_some_and(|(last, at)| {
                (last == idx - 1 || last == idx) && now.since(at) <= self.config.chunk_window
            });
        if ok {
            self.chunk_history.insert((face, base), (idx, now));
        }
        ok
    }

    pub fn on_interest(&mut self, interest: &Interest, in_face: FaceId, now: SimTime) -> Vec<Action> {
        let mut out = Vec::new();
        self.counters.interests_in += 1;
        self.pit.expire(now);
        let name = &interest.name;

        if self.defense.dropped_faces.contains(&in_face) {
            self.drop(&mut out, name, DropReason::FaceBlocked);
            return out;
        }
        if let Some(stats) = self.face_stats.as_mut() {
            stats.record_interest(in_face, name, interest.uses_exclude(), now);
        }
        if !self.config.allow_chunk_requests && !self.chunk_allowed(interest, in_face, now) {
            self.drop(&mut out, name, DropReason::ChunkBlocked);
            return out;
        }
        // (1) per-domain limiter
        if let Some(limiter) = self.limiter.as_mut() {
            if !limiter.admit(name, now) {
                self.drop(&mut out, name, DropReason::RateLimited);
                return out;
            }
        }
        // (2) duplicate nonce
        if self.pit.seen_nonce(name, interest.nonce) {
            self.drop(&mut out, name, DropReason::DuplicateNonce);
            return out;
        }
        // (3) content store
        if !self.defense.ignored_faces.contains(&in_face) {
            self.cs.record_request(name, now);
        }
        let lookup =
            self.cs.lookup(interest, in_face, now, self.config.allow_non_invasive, self.config.allow_exclude);
        if lookup.exclude_ignored {
            self.counters.exclude_ignored += 1;
        }
        let counted = !interest.no_cache_request;
        if counted {
            self.counters.lookups += 1;
            self.counters.per_face.entry(in_face).or_default().lookups += 1;
        }
        if let Some(object) = lookup.object {
            self.counters.hits += 1;
            self.counters.per_face.entry(in_face).or_default().hits += 1;
            if let Some(stats) = self.face_stats.as_mut() {
                stats.record_lookup(in_face, true, now);
            }
            let delay = self.config.hit_delay.sample(&mut self.delay_rng);
            self.counters.data_sent += 1;
            out.push(Action::Hit { name: object.name.clone() });
            out.push(Action::SendData { face: in_face, object, delay });
            return out;
        }
        if counted {
            if let Some(stats) = self.face_stats.as_mut() {
                stats.record_lookup(in_face, false, now);
            }
        }
        if interest.non_invasive && self.config.allow_non_invasive {
            self.drop(&mut out, name, DropReason::NonInvasiveMiss);
            return out;
        }
        // (4) PIT
        if self.pit.contains(name) {
            self.pit.register(name, in_face, interest.nonce, now);
            self.counters.aggregated += 1;
            out.push(Action::Aggregated { name: name.clone() });
            return out;
        }
        let Some(up) = self.fib.lookup(name) else {
            self.drop(&mut out, name, DropReason::NoRoute);
            return out;
        };
        // (5) overflow
        match self.pit.register(name, in_face, interest.nonce, now) {
            PitOutcome::Overflow => {
                self.drop(&mut out, name, DropReason::PitOverflow);
            }
            _ => {
                self.note_pit();
                self.counters.forwarded += 1;
                let mut fwd = interest.clone();
                if !self.config.allow_exclude {
                    fwd.exclude = Default::default();
                }
                out.push(Action::Forward { face: up, interest: fwd });
            }
        }
        out
    }

    fn substitute(&self, obj: ContentObject) -> (ContentObject, bool) {
        let Some(spec) = &self.poison else { return (obj, false) };
        if !spec.prefix.is_prefix_of(&obj.name) {
            return (obj, false);
        }
        let mut fake = obj;
        match spec.mode {
            PoisonMode::Tampered => {
                if fake.payload.is_empty() {
                    fake.payload.push(0xff);
                } else {
                    for b in fake.payload.iter_mut() {
                        *b ^= 0x5a;
                    }
                }
            }
            PoisonMode::Unverifiable => {
                fake.payload = b"fake".to_vec();
                fake.signature = Signature { key_id: KeyId(*b"\xde\xad\xbe\xef\0\0\0\0"), digest: [0xaa; 32] };
            }
        }
        (fake, true)
    }

    pub fn on_data(
        &mut self,
        obj: &ContentObject,
        _in_face: FaceId,
        now: SimTime,
        registry: &KeyRegistry,
    ) -> Vec<Action> {
        let mut out = Vec::new();
        self.counters.data_in += 1;
        self.pit.expire(now);
        let (obj, poisoned) = self.substitute(obj.clone());
        if poisoned {
            self.counters.poisoned += 1;
        }
        // data satisfies every pending interest whose name is a prefix of it
        let pending: Vec<Name> =
            (0..=obj.name.len()).rev().map(|l| obj.name.truncated(l)).filter(|n| self.pit.contains(n)).collect();
        if pending.is_empty() {
            self.drop(&mut out, &obj.name, DropReason::Unsolicited);
            return out;
        }
        if self.config.censor_keys.contains(&obj.signature.key_id) {
            self.drop(&mut out, &obj.name, DropReason::Censored);
            return out;
        }
        let mut delay = SimDuration::ZERO;
        if self.config.verify_signatures {
            self.counters.verifications += 1;
            let start = self.busy_until.max(now);
            self.busy_until = start + self.config.verify_cost;
            delay = self.busy_until.since(now);
        }
        self.counters.processed_data += 1;
        self.counters.processing_us += delay.as_micros();
        if self.config.verify_signatures && registry.verify(&obj.name, &obj.payload, &obj.signature) != Verification::Valid {
            self.drop(&mut out, &obj.name, DropReason::PoisonBlocked);
            return out;
        }
        let mut faces = BTreeSet::new();
        for n in &pending {
            if let Some(entry) = self.pit.take(n) {
                faces.extend(entry.faces);
            }
        }
        for face in &faces {
            self.counters.data_sent += 1;
            out.push(Action::SendData { face: *face, object: obj.clone(), delay });
        }
        self.cache_insert(obj, faces, now, &mut out);
        out
    }

    fn cache_insert(&mut self, obj: ContentObject, faces: BTreeSet<FaceId>, now: SimTime, out: &mut Vec<Action>) {
        if self.config.honor_no_cache && obj.no_cache {
            return;
        }
        if self.defense.blacklisted_keys.contains(&obj.signature.key_id) {
            return;
        }
        let requesters: BTreeSet<FaceId> =
            faces.into_iter().filter(|f| !self.defense.ignored_faces.contains(f)).collect();
        if requesters.is_empty() && !self.defense.ignored_faces.is_empty() {
            return;
        }
        let name = obj.name.clone();
        let res = self.cs.insert(obj, requesters, now, &mut self.cache_rng);
        for victim in res.evicted {
            self.counters.evictions += 1;
            out.push(Action::Evicted { name: victim });
        }
        if res.inserted {
            self.counters.cache_inserts += 1;
            out.push(Action::Cached { name });
        }
    }

    pub fn cs_remove(&mut self, name: &Name, now: SimTime) -> bool {
        self.cs.remove(name, now)
    }

    pub fn apply_blacklist(&mut self, names: &[Name], now: SimTime) -> usize {
        self.cs.apply_blacklist(names, now)
    }

    pub fn revalidate<F>(&mut self, now: SimTime, is_fresh: F) -> usize
    where
        F: FnMut(&Name, &ContentObject) -> bool,
    {
        self.cs.revalidate(now, is_fresh)
    }

    /// Never cache `key`'s content again and purge what is cached now.
    pub fn blacklist_producer(&mut self, key: KeyId, now: SimTime) -> usize {
        self.defense.blacklisted_keys.insert(key);
        self.cs.remove_signed_by(key, now)
    }

    /// Debug-run invariant check.
    pub fn audit(&self, now: SimTime) -> Result<(), String> {
        self.cs.audit()?;
        if let Some(cap) = self.pit.capacity() {
            if self.pit.len() > cap {
                return Err(format!("PIT holds {} > capacity {cap}", self.pit.len()));
            }
        }
        if self.config.honor_no_cache {
            if let Some((n, _)) = self.cs.entries().find(|(_, e)| e.object.no_cache) {
                return Err(format!("no-cache object {n} is cached"));
            }
        }
        let _ = now;
        Ok(())
    }

    /// Snapshot of cache names, PIT occupancy and counters.
    pub fn dump(&self, now: SimTime) -> serde_json::Value {
        serde_json::json!({
            "cs": self.cs.live_names(now).iter().map(|n| n.to_string()).collect::<Vec<_>>(),
            "pit": self.pit.len(),
            "lookups": self.counters.lookups,
            "hits": self.counters.hits,
            "forwarded": self.counters.forwarded,
        })
    }
}
