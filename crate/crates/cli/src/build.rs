//! Turns a validated scenario into a ready-to-run engine.

use ccnsim::attacks::{
    ClassifierProbe, ConversationCloner, Enumerator, FloodSpec, FloodVariant, Flooder, ProbeMode, RttCalibration,
    TcEstimator, TcEstimatorConfig, TimingProbeState, TimingProber,
};
use ccnsim::defenses::{
    schedule_broadcast, DetectorConfig, ExcludeConfig, HitRateConfig, PeriodicityConfig, PollutionConfig, Response,
};
use ccnsim::dist::{DelaySpec, LifetimeDist};
use ccnsim::engine::{
    Agent, ChunkSpec, Consumer, Conversation, Delayed, Engine, EngineError, KeyMode, NameDist, NodeId, ProducerConfig,
    RequestProcess, Workload,
};
use ccnsim::names::Name;
use ccnsim::overlay::{add_relay, OverlayConsumer};
use ccnsim::router::{CachePolicy, CsConfig, PoisonMode, PoisonSpec, RateLimit, RouterConfig};
use ccnsim::time::{SimDuration, SimTime};

use crate::scenario::*;

pub(crate) fn dur(ms: f64) -> SimDuration {
    SimDuration::from_micros((ms * 1000.0).round() as u64)
}

pub(crate) fn at(ms: f64) -> SimTime {
    SimTime::from_micros((ms * 1000.0).round() as u64)
}

// Names were checked during validation.
fn name(s: &str) -> Name {
    Name::parse(s).expect("validated name")
}

fn delay(d: DelayMs) -> DelaySpec {
    DelaySpec::new(dur(d.min_ms), dur(d.jitter_ms))
}

pub(crate) fn detector_config(d: &DetectorSpec) -> DetectorConfig {
    DetectorConfig {
        window: dur(d.window_ms),
        interval: dur(d.interval_ms),
        periodicity: d.periodicity.map(|p| {
            let def = PeriodicityConfig::default();
            PeriodicityConfig { min_repeats: p.min_repeats.unwrap_or(def.min_repeats), cv_max: p.cv_max.unwrap_or(def.cv_max) }
        }),
        hit_rate: d.hit_rate.map(|h| {
            let def = HitRateConfig::default();
            HitRateConfig { max: h.max.unwrap_or(def.max), min_lookups: h.min_lookups.unwrap_or(def.min_lookups) }
        }),
        exclude: d.exclude.map(|e| {
            let def = ExcludeConfig::default();
            ExcludeConfig {
                max_fraction: e.max_fraction.unwrap_or(def.max_fraction),
                min_interests: e.min_interests.unwrap_or(def.min_interests),
            }
        }),
        pollution: d.pollution.map(|p| {
            let def = PollutionConfig::default();
            PollutionConfig {
                share_max: p.share_max.unwrap_or(def.share_max),
                hit_rate_max: p.hit_rate_max.unwrap_or(def.hit_rate_max),
                min_lookups: p.min_lookups.unwrap_or(def.min_lookups),
            }
        }),
        response: d.response.map(|r| match r {
            ResponseSpec::IgnoreForCaching => Response::IgnoreForCaching,
            ResponseSpec::DropInterests => Response::DropInterests,
            ResponseSpec::BlacklistProducer => Response::BlacklistProducer,
        }),
    }
}

fn router_config(r: &RouterSpec) -> RouterConfig {
    let c = &r.cache;
    RouterConfig {
        verify_signatures: r.verify_signatures,
        verify_cost: dur(r.verify_cost_us / 1000.0),
        honor_no_cache: r.honor_no_cache,
        allow_non_invasive: r.allow_non_invasive,
        allow_exclude: r.allow_exclude,
        allow_chunk_requests: r.allow_chunk_requests,
        chunk_window: dur(r.chunk_window_ms),
        hit_delay: delay(r.hit_delay),
        per_domain_limit: match r.per_domain_limit {
            Limit::Unlimited => None,
            Limit::Rate(rate) => Some(match r.per_domain_burst {
                Some(burst) => RateLimit { rate, burst },
                None => RateLimit::per_second(rate),
            }),
        },
        pit_capacity: r.pit_capacity,
        pit_timeout: dur(r.pit_timeout_ms),
        cs: CsConfig {
            capacity: c.capacity,
            policy: match c.policy {
                Policy::Lru => CachePolicy::Lru,
                Policy::Fifo => CachePolicy::Fifo,
                Policy::Random => CachePolicy::Random,
                Policy::Popularity => CachePolicy::Popularity,
            },
            lifetime: match c.lifetime_ms {
                None => LifetimeDist::Infinite,
                Some(LifetimeMs::Fixed(x)) => LifetimeDist::Fixed(dur(x)),
                Some(LifetimeMs::Range([lo, hi])) => LifetimeDist::Uniform { lo: dur(lo), hi: dur(hi) },
            },
            popularity_k: c.popularity_k,
            popularity_window: dur(c.popularity_window_ms),
            record_removals: c.record_removals,
        },
        ..RouterConfig::default()
    }
}

fn conversation(p: &ProducerSpec) -> Option<Conversation> {
    p.conversation.as_ref().map(|c| Conversation {
        prefix: name(c.prefix.as_deref().unwrap_or(&p.prefix)),
        messages: c.messages,
        start: at(c.start_ms),
        interval: dur(c.interval_ms),
        opaque: c.opaque,
    })
}

fn producer_config(p: &ProducerSpec) -> ProducerConfig {
    let mut cfg = ProducerConfig::new(name(&p.prefix));
    cfg.key_mode = match p.key_mode {
        KeyModeSpec::LongLived => KeyMode::LongLived,
        KeyModeSpec::Ephemeral => KeyMode::Ephemeral,
    };
    cfg.service = delay(p.service);
    cfg.colluding_slow = p.colluding_slow_ms.map(dur);
    cfg.payload_size = p.payload_size;
    cfg.chunks = p.chunking.map(|c| ChunkSpec { object_size: c.object_size, chunk_size: c.chunk_size });
    cfg.no_cache = p.no_cache;
    cfg.conversation = conversation(p);
    cfg
}

fn workload(cfg: &ScenarioConfig, c: &ConsumerSpec) -> Workload {
    let process = match &c.process {
        ProcessSpec::Poisson { rate } => RequestProcess::Poisson { rate: *rate },
        ProcessSpec::Periodic { interval_ms } => RequestProcess::Periodic { interval: dur(*interval_ms) },
        ProcessSpec::Schedule { at_ms } => RequestProcess::Schedule(at_ms.iter().map(|t| at(*t)).collect()),
    };
    let names = match &c.names {
        NamesSpec::Fixed { name: n } => NameDist::Fixed(name(n)),
        NamesSpec::Zipf { prefix, catalog, alpha } => NameDist::Zipf { prefix: name(prefix), catalog: *catalog, alpha: *alpha },
        NamesSpec::Uniform { prefix, catalog } => NameDist::Uniform { prefix: name(prefix), catalog: *catalog },
        NamesSpec::Sequence { names } => NameDist::Sequence(names.iter().map(|n| name(n)).collect()),
        NamesSpec::Unique { prefix } => NameDist::Unique { prefix: name(prefix) },
        NamesSpec::Chunks { base, total } => NameDist::Chunks { base: name(base), total: *total },
        NamesSpec::Conversation { producer } => {
            let p = cfg.producers.iter().find(|p| &p.name == producer).expect("validated producer");
            NameDist::Conversation { conversation: conversation(p).expect("validated conversation"), publisher: producer.clone() }
        }
    };
    let mut w = Workload::new(process, names);
    w.start = at(c.start_ms);
    w.stop = c.stop_ms.map(at);
    w.max_requests = c.max_requests;
    w.timeout = dur(c.timeout_ms);
    w.no_cache_request = c.no_cache_request;
    w.use_exclude = c.use_exclude;
    w
}

/// Attack endpoints hang off their edge router by this one-way delay.
pub const ACCESS_DELAY_MS: f64 = 1.0;

fn attach(engine: &mut Engine, label: &str, edge: &str, agent: Box<dyn Agent>) -> Result<NodeId, EngineError> {
    let edge = engine.node_id(edge)?;
    let id = engine.add_endpoint(label, agent)?;
    engine.link(id, edge, dur(ACCESS_DELAY_MS))?;
    Ok(id)
}

fn add_attack(engine: &mut Engine, index: usize, a: &AttackSpec) -> Result<(), EngineError> {
    let labels = a.node_names(index);
    let delayed = |start_ms: f64, agent: Box<dyn Agent>| -> Box<dyn Agent> {
        if start_ms > 0.0 {
            Box::new(Delayed::new(at(start_ms), agent))
        } else {
            agent
        }
    };
    match a {
        AttackSpec::Enumerate { edge, prefix, limit, start_ms, miss_timeout_ms, .. } => {
            let agent = Enumerator::new(name(prefix), *limit, dur(*miss_timeout_ms));
            attach(engine, &labels[0], edge, delayed(*start_ms, Box::new(agent)))?;
        }
        AttackSpec::Timing {
            edge, target, mode, chunks, check, t_c_ms, epsilon_ms, hit_ms, miss_ms, start_ms, until_ms, timeout_ms, ..
        } => {
            let calibration = RttCalibration::from_samples(&[*hit_ms], &[*miss_ms]).expect("one sample each");
            let state = TimingProbeState {
                t_c: dur(*t_c_ms),
                epsilon: dur(*epsilon_ms),
                calibration,
                start: at(*start_ms),
                until: at(*until_ms),
                timeout: dur(*timeout_ms),
            };
            let mode = match mode {
                ProbeModeSpec::Sequential => ProbeMode::Sequential,
                ProbeModeSpec::Parallel => ProbeMode::Parallel { chunks: *chunks },
            };
            let prober = TimingProber::new(name(target), mode, state, check.as_deref().map(name));
            attach(engine, &labels[0], edge, Box::new(prober))?;
        }
        AttackSpec::Clone { edge, prefix, start_ms, until_ms, .. } => {
            let agent = ConversationCloner::new(name(prefix), at(*until_ms));
            attach(engine, &labels[0], edge, delayed(*start_ms, Box::new(agent)))?;
        }
        AttackSpec::Flood { edges, variant, prefix, rate, start_ms, stop_ms, timeout_ms, poisson, .. } => {
            let p = name(prefix);
            let variant = match variant {
                FloodKind::SameName => FloodVariant::SameName(p),
                FloodKind::DistinctNames => FloodVariant::DistinctNames(p),
                FloodKind::Nonexistent => FloodVariant::Nonexistent(p),
                FloodKind::Collusion => FloodVariant::Collusion(p),
            };
            let mut spec = FloodSpec::new(variant, *rate);
            spec.start = at(*start_ms);
            spec.stop = stop_ms.map(at);
            spec.timeout = dur(*timeout_ms);
            spec.poisson = *poisson;
            for (label, edge) in labels.iter().zip(edges) {
                attach(engine, label, edge, Box::new(Flooder::new(spec.clone())))?;
            }
        }
        AttackSpec::Pollution { edges, prefix, catalog, rate, start_ms, stop_ms, .. } => {
            let mut spec = FloodSpec::new(FloodVariant::Pollution { prefix: name(prefix), catalog: *catalog }, *rate);
            spec.start = at(*start_ms);
            spec.stop = stop_ms.map(at);
            for (label, edge) in labels.iter().zip(edges) {
                attach(engine, label, edge, Box::new(Flooder::new(spec.clone())))?;
            }
        }
        AttackSpec::Poison { router, prefix, mode } => {
            let mode = match mode {
                PoisonModeSpec::Tampered => PoisonMode::Tampered,
                PoisonModeSpec::Unverifiable => PoisonMode::Unverifiable,
            };
            let r = engine.node_id(router)?;
            engine.set_poison(r, PoisonSpec { prefix: name(prefix), mode })?;
        }
        AttackSpec::TcEstimate { edge, prefix, start_ms, initial_gap_ms, precision, max_gap_ms, repetitions, .. } => {
            let mut cfg = TcEstimatorConfig::new(name(prefix));
            if let Some(x) = initial_gap_ms {
                cfg.initial_gap = dur(*x);
            }
            if let Some(x) = precision {
                cfg.precision = *x;
            }
            if let Some(x) = max_gap_ms {
                cfg.max_gap = dur(*x);
            }
            if let Some(x) = repetitions {
                cfg.repetitions = *x as u32;
            }
            attach(engine, &labels[0], edge, delayed(*start_ms, Box::new(TcEstimator::new(cfg))))?;
        }
        AttackSpec::Classifier { edge, prefix, start_ms, calibration_samples, trials, .. } => {
            let agent = ClassifierProbe::new(name(prefix), *calibration_samples, *trials);
            attach(engine, &labels[0], edge, delayed(*start_ms, Box::new(agent)))?;
        }
    }
    Ok(())
}

/// Builds the engine for `cfg` under `seed`. Nothing has run yet; the first
/// `run_until` starts every host.
pub fn build_engine(cfg: &ScenarioConfig, seed: u64) -> Result<Engine, EngineError> {
    let mut e = Engine::new(seed);
    e.set_sample_interval(dur(cfg.sample_ms));
    for r in &cfg.routers {
        e.add_router(&r.name, router_config(r))?;
    }
    for p in &cfg.producers {
        e.add_producer(&p.name, producer_config(p))?;
    }
    for c in &cfg.consumers {
        e.add_endpoint(&c.name, Box::new(Consumer::new(workload(cfg, c))))?;
    }
    for l in &cfg.links {
        let (a, b) = (e.node_id(&l.a)?, e.node_id(&l.b)?);
        e.link_lossy(a, b, dur(l.delay_ms), l.loss)?;
    }
    if let Some(o) = &cfg.overlay {
        let mut directory = Vec::new();
        for r in &o.relays {
            let info = add_relay(&mut e, &r.name, name(&r.prefix), dur(r.processing_ms))?;
            let router = e.node_id(&r.router)?;
            e.link(info.node, router, dur(r.delay_ms))?;
            directory.push(info);
        }
        for c in &o.consumers {
            let requests = c.requests.iter().map(|t| (at(t.at_ms), name(&t.name))).collect();
            let id = e.add_endpoint(&c.name, Box::new(OverlayConsumer::new(directory.clone(), requests)))?;
            let router = e.node_id(&c.router)?;
            e.link(id, router, dur(c.delay_ms))?;
        }
    }
    for (i, a) in cfg.attacks.iter().enumerate() {
        add_attack(&mut e, i, a)?;
    }
    if cfg.auto_route {
        e.auto_route();
    }
    for r in &cfg.routes {
        let (router, via) = (e.node_id(&r.router)?, e.node_id(&r.via)?);
        e.route(router, name(&r.prefix), via)?;
    }
    for r in &cfg.routers {
        let id = e.node_id(&r.name)?;
        for p in &r.censor {
            let key = e.host::<ccnsim::engine::Producer>(e.node_id(p)?).expect("validated producer").key();
            e.router_mut(id).expect("router").censor(key);
        }
        if let Some(d) = &r.detectors {
            e.set_detectors(id, detector_config(d))?;
        }
        if let Some(every) = r.revalidate_every_ms {
            e.schedule_revalidation(SimTime::ZERO + dur(every), id, Some(dur(every)))?;
        }
    }
    for b in &cfg.blacklists {
        let origin = e.node_id(&b.origin)?;
        let names: Vec<Name> = b.names.iter().map(|n| name(n)).collect();
        schedule_broadcast(&mut e, at(b.at_ms), origin, &names)?;
    }
    if cfg.warmup_ms > 0.0 {
        e.schedule_reset(at(cfg.warmup_ms))?;
    }
    Ok(e)
}
