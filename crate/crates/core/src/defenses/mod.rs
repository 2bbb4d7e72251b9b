//! Edge-router detection heuristics and the responses they can trigger.
//!
//! Detectors are pure: they read a [`FaceStats`] (and for pollution, the
//! content store) and return flags. The engine decides when to run them.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::crypto::KeyId;
use crate::dist::mean_and_cv;
use crate::names::Name;
use crate::packet::FaceId;
use crate::router::ContentStore;
use crate::time::{SimDuration, SimTime};

/// Per-face request history over a sliding window.
#[derive(Clone, Debug)]
pub struct FaceStats {
    window: SimDuration,
    requests: BTreeMap<(FaceId, Name), VecDeque<SimTime>>,
    request_log: VecDeque<(SimTime, FaceId, Name)>,
    lookups: BTreeMap<FaceId, VecDeque<(SimTime, bool)>>,
    interests: BTreeMap<FaceId, VecDeque<(SimTime, bool)>>,
}

impl FaceStats {
    pub fn new(window: SimDuration) -> Self {
        FaceStats {
            window,
            requests: BTreeMap::new(),
            request_log: VecDeque::new(),
            lookups: BTreeMap::new(),
            interests: BTreeMap::new(),
        }
    }

    pub fn window(&self) -> SimDuration {
        self.window
    }

    fn horizon(&self, now: SimTime) -> SimTime {
        now.saturating_sub(self.window)
    }

    pub fn record_interest(&mut self, face: FaceId, name: &Name, uses_exclude: bool, now: SimTime) {
        self.prune(now);
        self.requests.entry((face, name.clone())).or_default().push_back(now);
        self.request_log.push_back((now, face, name.clone()));
        self.interests.entry(face).or_default().push_back((now, uses_exclude));
    }

    pub fn record_lookup(&mut self, face: FaceId, hit: bool, now: SimTime) {
        self.lookups.entry(face).or_default().push_back((now, hit));
    }

    /// Forgets everything older than the window.
    pub fn prune(&mut self, now: SimTime) {
        let h = self.horizon(now);
        while self.request_log.front().is_some_and(|(t, _, _)| *t < h) {
            let (_, face, name) = self.request_log.pop_front().expect("non-empty");
            let key = (face, name);
            if let Some(q) = self.requests.get_mut(&key) {
                q.pop_front();
                if q.is_empty() {
                    self.requests.remove(&key);
                }
            }
        }
        for q in self.lookups.values_mut().chain(self.interests.values_mut()) {
            while q.front().is_some_and(|(t, _)| *t < h) {
                q.pop_front();
            }
        }
        self.lookups.retain(|_, q| !q.is_empty());
        self.interests.retain(|_, q| !q.is_empty());
    }

    /// (lookups, hits) for `face` inside the window ending at `now`.
    pub fn lookup_counts(&self, face: FaceId, now: SimTime) -> (usize, usize) {
        let h = self.horizon(now);
        self.lookups.get(&face).map_or((0, 0), |q| {
            q.iter().filter(|(t, _)| *t >= h).fold((0, 0), |(n, k), (_, hit)| (n + 1, k + usize::from(*hit)))
        })
    }

    /// (interests, exclude-bearing interests) for `face` inside the window.
    pub fn exclude_counts(&self, face: FaceId, now: SimTime) -> (usize, usize) {
        let h = self.horizon(now);
        self.interests.get(&face).map_or((0, 0), |q| {
            q.iter().filter(|(t, _)| *t >= h).fold((0, 0), |(n, k), (_, ex)| (n + 1, k + usize::from(*ex)))
        })
    }

    pub fn faces(&self) -> BTreeSet<FaceId> {
        self.lookups.keys().chain(self.interests.keys()).copied().collect()
    }

    /// Same-name request times per (face, name) inside the window.
    pub fn request_series(&self, now: SimTime) -> impl Iterator<Item = (FaceId, &Name, Vec<SimTime>)> {
        let h = self.horizon(now);
        self.requests.iter().map(move |((f, n), q)| (*f, n, q.iter().copied().filter(|t| *t >= h).collect()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PeriodicityConfig {
    pub min_repeats: usize,
    pub cv_max: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HitRateConfig {
    pub max: f64,
    pub min_lookups: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExcludeConfig {
    /// Largest tolerated fraction of exclude-bearing interests.
    pub max_fraction: f64,
    pub min_interests: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PollutionConfig {
    /// A face is suspicious once names only it requested fill this share of the cache.
    pub share_max: f64,
    /// ...and its own requests hit no more often than this.
    pub hit_rate_max: f64,
    pub min_lookups: usize,
}

impl Default for PeriodicityConfig {
    fn default() -> Self {
        PeriodicityConfig { min_repeats: 5, cv_max: 0.2 }
    }
}

impl Default for HitRateConfig {
    fn default() -> Self {
        HitRateConfig { max: 0.9, min_lookups: 20 }
    }
}

impl Default for ExcludeConfig {
    fn default() -> Self {
        ExcludeConfig { max_fraction: 0.1, min_interests: 3 }
    }
}

impl Default for PollutionConfig {
    fn default() -> Self {
        PollutionConfig { share_max: 0.2, hit_rate_max: 0.1, min_lookups: 20 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DetectorError {
    #[error("{0} must lie in [0, 1]")]
    OutOfRange(&'static str),
    #[error("cv_max must be positive")]
    CvMax,
}

/// Which detectors run and what they do about flags.
#[derive(Clone, Debug, PartialEq)]
pub struct DetectorConfig {
    pub window: SimDuration,
    pub interval: SimDuration,
    pub periodicity: Option<PeriodicityConfig>,
    pub hit_rate: Option<HitRateConfig>,
    pub exclude: Option<ExcludeConfig>,
    pub pollution: Option<PollutionConfig>,
    pub response: Option<Response>,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            window: SimDuration::from_secs(30),
            interval: SimDuration::from_secs(1),
            periodicity: None,
            hit_rate: None,
            exclude: None,
            pollution: None,
            response: None,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<(), DetectorError> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if let Some(p) = self.periodicity {
            if p.cv_max <= 0.0 || p.cv_max.is_nan() {
                return Err(DetectorError::CvMax);
            }
        }
        if self.hit_rate.is_some_and(|h| !unit(h.max)) {
            return Err(DetectorError::OutOfRange("hit_rate.max"));
        }
        if self.exclude.is_some_and(|e| !unit(e.max_fraction)) {
            return Err(DetectorError::OutOfRange("exclude.max_fraction"));
        }
        if let Some(p) = self.pollution {
            if !unit(p.share_max) {
                return Err(DetectorError::OutOfRange("pollution.share_max"));
            }
            if !unit(p.hit_rate_max) {
                return Err(DetectorError::OutOfRange("pollution.hit_rate_max"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DetectorKind {
    Periodicity,
    HitRate,
    ExcludeUsage,
    Pollution,
}

impl DetectorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DetectorKind::Periodicity => "periodic_query",
            DetectorKind::HitRate => "hit_rate",
            DetectorKind::ExcludeUsage => "exclude_usage",
            DetectorKind::Pollution => "pollution",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Flag {
    pub kind: DetectorKind,
    pub face: Option<FaceId>,
    pub name: Option<Name>,
}

/// Flags `(face, name)` pairs whose same-name requests look clockwork-regular.
pub fn periodic_query_detector(stats: &FaceStats, cfg: &PeriodicityConfig, now: SimTime) -> Vec<Flag> {
    let mut flags = Vec::new();
    for (face, name, times) in stats.request_series(now) {
        if times.len() < cfg.min_repeats.max(2) {
            continue;
        }
        let gaps: Vec<f64> = times.windows(2).map(|w| w[1].since(w[0]).as_micros() as f64).collect();
        if let Some((_, cv)) = mean_and_cv(&gaps) {
            if cv <= cfg.cv_max {
                flags.push(Flag { kind: DetectorKind::Periodicity, face: Some(face), name: Some(name.clone()) });
            }
        }
    }
    flags
}

pub fn hit_rate_detector(stats: &FaceStats, cfg: &HitRateConfig, now: SimTime) -> Vec<Flag> {
    stats
        .faces()
        .into_iter()
        .filter(|f| {
            let (n, hits) = stats.lookup_counts(*f, now);
            n >= cfg.min_lookups && n > 0 && hits as f64 / n as f64 > cfg.max
        })
        .map(|f| Flag { kind: DetectorKind::HitRate, face: Some(f), name: None })
        .collect()
}

pub fn exclude_usage_detector(stats: &FaceStats, cfg: &ExcludeConfig, now: SimTime) -> Vec<Flag> {
    stats
        .faces()
        .into_iter()
        .filter(|f| {
            let (n, ex) = stats.exclude_counts(*f, now);
            n >= cfg.min_interests.max(1) && ex as f64 / n as f64 > cfg.max_fraction
        })
        .map(|f| Flag { kind: DetectorKind::ExcludeUsage, face: Some(f), name: None })
        .collect()
}

/// Flags faces whose exclusively-requested names occupy a large share of the
/// cache while the face itself almost never hits, and those names.
pub fn pollution_detector(cs: &ContentStore, stats: &FaceStats, cfg: &PollutionConfig, now: SimTime) -> Vec<Flag> {
    let capacity = cs.config().capacity;
    if capacity == 0 || cs.is_empty() {
        return Vec::new();
    }
    let mut exclusive: BTreeMap<FaceId, Vec<&Name>> = BTreeMap::new();
    for (name, entry) in cs.entries() {
        if entry.requesters.len() == 1 {
            let face = *entry.requesters.first().expect("len 1");
            exclusive.entry(face).or_default().push(name);
        }
    }
    let mut flags = Vec::new();
    for (face, names) in exclusive {
        let share = names.len() as f64 / capacity as f64;
        let (n, hits) = stats.lookup_counts(face, now);
        if n < cfg.min_lookups || share <= cfg.share_max || hits as f64 / n as f64 > cfg.hit_rate_max {
            continue;
        }
        flags.push(Flag { kind: DetectorKind::Pollution, face: Some(face), name: None });
        flags.extend(
            names.into_iter().map(|nm| Flag { kind: DetectorKind::Pollution, face: None, name: Some(nm.clone()) }),
        );
    }
    flags
}

/// Runs every configured detector.
pub fn run_detectors(cs: &ContentStore, stats: &FaceStats, cfg: &DetectorConfig, now: SimTime) -> Vec<Flag> {
    let mut flags = Vec::new();
    if let Some(p) = &cfg.periodicity {
        flags.extend(periodic_query_detector(stats, p, now));
    }
    if let Some(h) = &cfg.hit_rate {
        flags.extend(hit_rate_detector(stats, h, now));
    }
    if let Some(e) = &cfg.exclude {
        flags.extend(exclude_usage_detector(stats, e, now));
    }
    if let Some(p) = &cfg.pollution {
        flags.extend(pollution_detector(cs, stats, p, now));
    }
    flags
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Response {
    /// Flagged faces stop counting toward admission and never trigger caching.
    IgnoreForCaching,
    /// Flagged faces' interests are dropped on arrival.
    DropInterests,
    /// Content signed by the producer of flagged names is never cached again.
    BlacklistProducer,
}

/// Router-resident defense state.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DefenseState {
    pub ignored_faces: BTreeSet<FaceId>,
    pub dropped_faces: BTreeSet<FaceId>,
    pub blacklisted_keys: BTreeSet<KeyId>,
}


/// Schedules a content-name blacklist flood from `origin` at `at`: every
/// reachable router gets a copy after its shortest-path delay. Returns the
/// number of copies (messages) and the time the last one lands.
pub fn schedule_broadcast(
    engine: &mut crate::engine::Engine,
    at: SimTime,
    origin: crate::engine::NodeId,
    names: &[Name],
) -> Result<(u64, SimTime), crate::engine::EngineError> {
    let names: std::sync::Arc<[Name]> = names.into();
    let mut last = at;
    let mut messages = 0;
    for r in engine.router_ids() {
        let Some(delay) = engine.path_delay(origin, r) else { continue };
        engine.schedule_blacklist(at + delay, r, names.clone())?;
        last = last.max(at + delay);
        messages += 1;
    }
    engine.blacklist.messages += messages;
    Ok((messages, last))
}

/// Broadcasts a blacklist now and runs the engine until every copy is applied.
pub fn broadcast_blacklist(
    engine: &mut crate::engine::Engine,
    origin: crate::engine::NodeId,
    names: &[Name],
) -> Result<crate::engine::Overhead, crate::engine::EngineError> {
    let before = engine.blacklist.removals;
    let (messages, last) = schedule_broadcast(engine, engine.now(), origin, names)?;
    engine.run_until(last)?;
    Ok(crate::engine::Overhead { messages, removals: engine.blacklist.removals - before })
}
