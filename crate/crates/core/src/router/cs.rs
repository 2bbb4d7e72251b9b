//! Content Store: the router's cache of content objects.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::Rng;

use crate::crypto::KeyId;
use crate::dist::LifetimeDist;
use crate::names::Name;
use crate::packet::{ContentObject, FaceId, Interest};
use crate::time::{SimDuration, SimTime};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum CachePolicy {
    Fifo,
    #[default]
    Lru,
    Random,
    /// Admit a name only after `k` requests inside the popularity window;
    /// evict the entry with the fewest recent requests.
    Popularity,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CsConfig {
    pub capacity: usize,
    pub policy: CachePolicy,
    pub lifetime: LifetimeDist,
    pub popularity_k: u32,
    pub popularity_window: SimDuration,
    /// Keep a log of every removal (ground truth for residency measurements).
    pub record_removals: bool,
}

impl Default for CsConfig {
    fn default() -> Self {
        CsConfig {
            capacity: 100,
            policy: CachePolicy::Lru,
            lifetime: LifetimeDist::Infinite,
            popularity_k: 2,
            popularity_window: SimDuration::from_secs(10),
            record_removals: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct CsEntry {
    pub object: ContentObject,
    pub inserted: SimTime,
    pub expires: Option<SimTime>,
    pub last_access: SimTime,
    pub hit_count: u64,
    /// Faces that requested this name while it was pending or cached.
    pub requesters: BTreeSet<FaceId>,
    order_key: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RemovalCause {
    Capacity,
    Expired,
    Explicit,
    Blacklist,
    Revalidation,
    ProducerBlacklist,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Removal {
    pub name: Name,
    pub inserted: SimTime,
    pub last_access: SimTime,
    pub at: SimTime,
    pub cause: RemovalCause,
}

#[derive(Clone, Debug)]
pub struct Lookup {
    pub object: Option<ContentObject>,
    /// The interest carried an exclude that this store refused to honor.
    pub exclude_ignored: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InsertSkip {
    ZeroCapacity,
    Unpopular,
}

#[derive(Clone, Debug, Default)]
pub struct InsertOutcome {
    pub inserted: bool,
    pub skipped: Option<InsertSkip>,
    pub evicted: Vec<Name>,
}

#[derive(Clone, Debug)]
pub struct ContentStore {
    config: CsConfig,
    entries: BTreeMap<Name, CsEntry>,
    /// FIFO: insertion order. LRU: recency. Others: insertion order.
    order: BTreeMap<u64, Name>,
    by_expiry: BTreeSet<(SimTime, Name)>,
    next_key: u64,
    requests: BTreeMap<Name, VecDeque<SimTime>>,
    request_log: VecDeque<(SimTime, Name)>,
    removals: Vec<Removal>,
}

impl ContentStore {
    pub fn new(config: CsConfig) -> Self {
        ContentStore {
            config,
            entries: BTreeMap::new(),
            order: BTreeMap::new(),
            by_expiry: BTreeSet::new(),
            next_key: 0,
            requests: BTreeMap::new(),
            request_log: VecDeque::new(),
            removals: Vec::new(),
        }
    }

    pub fn config(&self) -> &CsConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, name: &Name) -> bool {
        self.entries.contains_key(name)
    }

    pub fn get(&self, name: &Name) -> Option<&CsEntry> {
        self.entries.get(name)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&Name, &CsEntry)> {
        self.entries.iter()
    }

    pub fn names(&self) -> impl Iterator<Item = &Name> {
        self.entries.keys()
    }

    /// Names that would be returned as hits at `now` (not yet purged but expired ones excluded).
    pub fn live_names(&self, now: SimTime) -> Vec<Name> {
        self.entries
            .iter()
            .filter(|(_, e)| !is_expired(e, now))
            .map(|(n, _)| n.clone())
            .collect()
    }

    pub fn removals(&self) -> &[Removal] {
        &self.removals
    }

    fn fresh_key(&mut self) -> u64 {
        self.next_key += 1;
        self.next_key
    }

    fn remove_entry(&mut self, name: &Name, now: SimTime, cause: RemovalCause) -> Option<CsEntry> {
        let entry = self.entries.remove(name)?;
        self.order.remove(&entry.order_key);
        if let Some(exp) = entry.expires {
            self.by_expiry.remove(&(exp, name.clone()));
        }
        if self.config.record_removals {
            self.removals.push(Removal {
                name: name.clone(),
                inserted: entry.inserted,
                last_access: entry.last_access,
                // expired entries left at their expiry instant, not when purged
                at: if cause == RemovalCause::Expired { entry.expires.unwrap_or(now) } else { now },
                cause,
            });
        }
        Some(entry)
    }

    /// Drops every entry whose lifetime has run out (`now > expires`).
    pub fn purge_expired(&mut self, now: SimTime) -> usize {
        let mut n = 0;
        while let Some((exp, _)) = self.by_expiry.first() {
            if *exp >= now {
                break;
            }
            let (_, name) = self.by_expiry.first().cloned().expect("non-empty");
            self.remove_entry(&name, now, RemovalCause::Expired);
            n += 1;
        }
        n
    }

    fn prune_requests(&mut self, now: SimTime) {
        let horizon = now.saturating_sub(self.config.popularity_window);
        while let Some((t, _)) = self.request_log.front() {
            if *t >= horizon {
                break;
            }
            let (_, name) = self.request_log.pop_front().expect("non-empty");
            if let Some(q) = self.requests.get_mut(&name) {
                q.pop_front();
                if q.is_empty() {
                    self.requests.remove(&name);
                }
            }
        }
    }

    /// Counts a request toward popularity-based admission.
    pub fn record_request(&mut self, name: &Name, now: SimTime) {
        if self.config.policy != CachePolicy::Popularity {
            return;
        }
        self.prune_requests(now);
        self.requests.entry(name.clone()).or_default().push_back(now);
        self.request_log.push_back((now, name.clone()));
    }

    /// Requests for `name` inside the sliding window ending at `now`.
    pub fn request_count(&self, name: &Name, now: SimTime) -> usize {
        let horizon = now.saturating_sub(self.config.popularity_window);
        self.requests.get(name).map_or(0, |q| q.iter().filter(|t| **t >= horizon).count())
    }

    /// Prefix-with-exclude lookup over live entries.
    ///
    /// A non-invasive hit (when allowed) leaves recency and hit counters
    /// untouched. `no_cache_request` always misses.
    pub fn lookup(
        &mut self,
        interest: &Interest,
        face: FaceId,
        now: SimTime,
        allow_non_invasive: bool,
        allow_exclude: bool,
    ) -> Lookup {
        self.purge_expired(now);
        let exclude_ignored = interest.uses_exclude() && !allow_exclude;
        if interest.no_cache_request {
            return Lookup { object: None, exclude_ignored };
        }
        let prefix = &interest.name;
        let found = self
            .entries
            .range(prefix.clone()..)
            .take_while(|(name, _)| prefix.is_prefix_of(name))
            .find(|(name, entry)| {
                !is_expired(entry, now) && (!allow_exclude || !interest.exclude.contains(name))
            })
            .map(|(name, _)| name.clone());
        let Some(name) = found else {
            return Lookup { object: None, exclude_ignored };
        };
        let invasive = !(interest.non_invasive && allow_non_invasive);
        let lru = self.config.policy == CachePolicy::Lru;
        let new_key = if invasive && lru { Some(self.fresh_key()) } else { None };
        let entry = self.entries.get_mut(&name).expect("found above");
        if invasive {
            entry.last_access = now;
            entry.hit_count += 1;
            entry.requesters.insert(face);
            if let Some(key) = new_key {
                self.order.remove(&entry.order_key);
                entry.order_key = key;
                self.order.insert(key, name.clone());
            }
        }
        Lookup { object: Some(entry.object.clone()), exclude_ignored }
    }

    /// Inserts `obj`, evicting per policy. The caller decides do-not-cache
    /// and blacklist questions before calling.
    pub fn insert<R: Rng + ?Sized>(
        &mut self,
        obj: ContentObject,
        requesters: BTreeSet<FaceId>,
        now: SimTime,
        rng: &mut R,
    ) -> InsertOutcome {
        let mut out = InsertOutcome::default();
        if self.config.capacity == 0 {
            out.skipped = Some(InsertSkip::ZeroCapacity);
            return out;
        }
        if self.config.policy == CachePolicy::Popularity {
            self.prune_requests(now);
            if self.request_count(&obj.name, now) < self.config.popularity_k as usize {
                out.skipped = Some(InsertSkip::Unpopular);
                return out;
            }
        }
        self.purge_expired(now);
        let name = obj.name.clone();
        let mut requesters = requesters;
        if let Some(old) = self.remove_entry(&name, now, RemovalCause::Explicit) {
            requesters.extend(old.requesters);
            // a refresh is not a removal
            if self.config.record_removals {
                self.removals.pop();
            }
        }
        while self.entries.len() >= self.config.capacity {
            let Some(victim) = self.pick_victim(now, rng) else { break };
            self.remove_entry(&victim, now, RemovalCause::Capacity);
            out.evicted.push(victim);
        }
        let expires = self.config.lifetime.sample(rng).map(|d| now + d);
        let key = self.fresh_key();
        if let Some(exp) = expires {
            self.by_expiry.insert((exp, name.clone()));
        }
        self.order.insert(key, name.clone());
        self.entries.insert(
            name,
            CsEntry {
                object: obj,
                inserted: now,
                expires,
                last_access: now,
                hit_count: 0,
                requesters,
                order_key: key,
            },
        );
        out.inserted = true;
        out
    }

    fn pick_victim<R: Rng + ?Sized>(&self, now: SimTime, rng: &mut R) -> Option<Name> {
        match self.config.policy {
            CachePolicy::Fifo | CachePolicy::Lru => self.order.values().next().cloned(),
            CachePolicy::Random => {
                if self.entries.is_empty() {
                    return None;
                }
                let idx = rng.random_range(0..self.entries.len());
                self.entries.keys().nth(idx).cloned()
            }
            CachePolicy::Popularity => self
                .entries
                .iter()
                .min_by_key(|(name, e)| (self.request_count(name, now), e.order_key))
                .map(|(name, _)| name.clone()),
        }
    }

    pub fn remove(&mut self, name: &Name, now: SimTime) -> bool {
        self.remove_entry(name, now, RemovalCause::Explicit).is_some()
    }

    /// Removes every cached name on the list; returns how many were present.
    pub fn apply_blacklist<'a, I>(&mut self, names: I, now: SimTime) -> usize
    where
        I: IntoIterator<Item = &'a Name>,
    {
        names
            .into_iter()
            .filter(|n| self.remove_entry(n, now, RemovalCause::Blacklist).is_some())
            .count()
    }

    /// Asks `is_fresh` about every entry and drops the stale ones.
    pub fn revalidate<F>(&mut self, now: SimTime, mut is_fresh: F) -> usize
    where
        F: FnMut(&Name, &ContentObject) -> bool,
    {
        let stale: Vec<Name> = self
            .entries
            .iter()
            .filter(|(n, e)| !is_fresh(n, &e.object))
            .map(|(n, _)| n.clone())
            .collect();
        for n in &stale {
            self.remove_entry(n, now, RemovalCause::Revalidation);
        }
        stale.len()
    }

    /// Drops everything signed under `key`.
    pub fn remove_signed_by(&mut self, key: KeyId, now: SimTime) -> usize {
        let doomed: Vec<Name> = self
            .entries
            .iter()
            .filter(|(_, e)| e.object.signature.key_id == key)
            .map(|(n, _)| n.clone())
            .collect();
        for n in &doomed {
            self.remove_entry(n, now, RemovalCause::ProducerBlacklist);
        }
        doomed.len()
    }

    /// Structural invariants: size bound and index consistency.
    pub fn audit(&self) -> Result<(), String> {
        if self.entries.len() > self.config.capacity {
            return Err(format!("content store holds {} > capacity {}", self.entries.len(), self.config.capacity));
        }
        if self.order.len() != self.entries.len() {
            return Err("content store order index out of sync".into());
        }
        Ok(())
    }
}

fn is_expired(entry: &CsEntry, now: SimTime) -> bool {
    entry.expires.is_some_and(|exp| now > exp)
}
