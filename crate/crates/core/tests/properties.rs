use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};

use ccnsim::attacks::{enumerate_cache, timing_probe_loop, RttCalibration, TimingProbeState};
use ccnsim::crypto::{open_layer, seal_layer, KeyRegistry, Verification};
use ccnsim::defenses::DetectorConfig;
use ccnsim::dist::{DelaySpec, LifetimeDist};
use ccnsim::engine::{Consumer, Engine, NameDist, NodeId, ProducerConfig, RequestProcess, Workload};
use ccnsim::names::Name;
use ccnsim::packet::{ContentObject, FaceId};
use ccnsim::rng::SimRng;
use ccnsim::router::{CachePolicy, ContentStore, CsConfig, RouterConfig};
use ccnsim::time::{SimDuration, SimTime};

fn n(s: &str) -> Name {
    Name::parse(s).unwrap()
}

fn ms(x: u64) -> SimDuration {
    SimDuration::from_millis(x)
}

#[test]
fn tampering_is_never_accepted() {
    let mut rng = SimRng::seed_from_u64(99);
    let mut reg = KeyRegistry::new();
    let key = reg.register("p", &mut rng);
    let mut accepted = 0;
    for i in 0..10_000 {
        let name = n(&format!("/p/{i}"));
        let payload: Vec<u8> = (0..rng.random_range(1..64)).map(|_| rng.random()).collect();
        let sig = reg.sign(key, &name, &payload).unwrap();
        let (name2, payload2) = if rng.random_bool(0.5) {
            let mut p = payload.clone();
            let at = rng.random_range(0..p.len());
            p[at] ^= 1 << rng.random_range(0..8);
            (name.clone(), p)
        } else {
            (name.join("x"), payload.clone())
        };
        if reg.verify(&name2, &payload2, &sig) == Verification::Valid {
            accepted += 1;
        }
    }
    assert_eq!(accepted, 0);
}

fn object(reg: &KeyRegistry, key: ccnsim::crypto::KeyId, name: Name) -> ContentObject {
    let payload = name.to_string().into_bytes();
    let signature = reg.sign(key, &name, &payload).unwrap();
    ContentObject { name, payload, signature, no_cache: false, chunk_index: None, total_chunks: None }
}

fn policy() -> impl Strategy<Value = CachePolicy> {
    prop_oneof![Just(CachePolicy::Fifo), Just(CachePolicy::Lru), Just(CachePolicy::Random), Just(CachePolicy::Popularity)]
}

/// Workload for one consumer: `count` requests over a small catalog.
fn consumer_workload(rate: f64, catalog: u64) -> Workload {
    let mut w = Workload::new(RequestProcess::Poisson { rate }, NameDist::Uniform { prefix: n("/p"), catalog });
    w.timeout = ms(300);
    w
}

/// Two consumers, an edge with a small cache, a lossy core link and a producer.
fn small_net(seed: u64, rate: f64, catalog: u64, loss: f64, with_idle_defenses: bool) -> (Engine, Vec<NodeId>) {
    let mut e = Engine::new(seed);
    let cfg = RouterConfig {
        cs: CsConfig { capacity: 5, lifetime: LifetimeDist::Fixed(ms(500)), ..CsConfig::default() },
        ..RouterConfig::default()
    };
    let edge = e.add_router("edge", cfg).unwrap();
    let core = e.add_router("core", RouterConfig::default()).unwrap();
    e.link_lossy(edge, core, ms(3), loss).unwrap();
    let mut pc = ProducerConfig::new(n("/p"));
    pc.service = DelaySpec::new(ms(1), ms(4));
    let p = e.add_producer("p", pc).unwrap();
    e.link(core, p, ms(5)).unwrap();
    let consumers: Vec<NodeId> = (0..2)
        .map(|i| {
            let c = e.add_endpoint(&format!("c{i}"), Box::new(Consumer::new(consumer_workload(rate, catalog)))).unwrap();
            e.link(c, edge, ms(1)).unwrap();
            c
        })
        .collect();
    e.auto_route();
    if with_idle_defenses {
        e.set_detectors(edge, DetectorConfig::default()).unwrap();
    }
    e.enable_trace(false);
    (e, consumers)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn layers_peel_in_reverse_order(k1 in any::<[u8; 32]>(), k2 in any::<[u8; 32]>(), pt in prop::collection::vec(any::<u8>(), 0..100)) {
        let wrapped = seal_layer(&k1, &seal_layer(&k2, &pt));
        let inner = open_layer(&k1, &wrapped).unwrap();
        prop_assert_eq!(open_layer(&k2, &inner).unwrap(), pt);
    }

    #[test]
    fn cache_respects_capacity_and_expiry(
        policy in policy(),
        capacity in 0usize..8,
        ops in prop::collection::vec((0u8..20, 0u64..50, any::<bool>()), 1..120),
    ) {
        let mut rng = SimRng::seed_from_u64(1);
        let mut reg = KeyRegistry::new();
        let key = reg.register("p", &mut rng);
        let cfg = CsConfig { capacity, policy, lifetime: LifetimeDist::Fixed(ms(30)), popularity_k: 1, ..CsConfig::default() };
        let mut cs = ContentStore::new(cfg);
        let mut now = SimTime::ZERO;
        for (item, step, remove) in ops {
            now += ms(step);
            let name = n(&format!("/p/{item}"));
            cs.record_request(&name, now);
            if remove {
                cs.remove(&name, now);
            } else {
                cs.insert(object(&reg, key, name), BTreeSet::from([FaceId(0)]), now, &mut rng);
            }
            prop_assert!(cs.len() <= capacity);
            prop_assert!(cs.audit().is_ok());
            prop_assert!(cs.live_names(now).len() <= cs.len());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn consumers_conserve_requests(seed in any::<u64>(), rate in 5.0f64..60.0, catalog in 1u64..20, loss in 0.0f64..0.3) {
        let (mut e, consumers) = small_net(seed, rate, catalog, loss, false);
        e.run_until(SimTime::from_secs(3)).unwrap();
        for c in consumers {
            let ep = e.endpoint(c).unwrap();
            let s = &ep.stats;
            prop_assert_eq!(s.sent, s.satisfied + s.rejected + s.timed_out + ep.pending_count());
        }
    }

    #[test]
    fn same_seed_same_trace(seed in any::<u64>(), rate in 5.0f64..60.0) {
        let run = |defenses| {
            let (mut e, _) = small_net(seed, rate, 10, 0.1, defenses);
            e.run_until(SimTime::from_secs(2)).unwrap();
            e.trace().unwrap().digest()
        };
        let a = run(false);
        prop_assert_eq!(&a, &run(false));
        // detectors with nothing enabled are invisible
        prop_assert_eq!(&a, &run(true));
    }

    #[test]
    fn same_name_burst_is_forwarded_once(k in 2usize..12, spread_us in 0u64..9_000) {
        let mut e = Engine::new(1);
        let edge = e.add_router("edge", RouterConfig::default()).unwrap();
        let mut pc = ProducerConfig::new(n("/p"));
        pc.service = DelaySpec::ZERO;
        let p = e.add_producer("p", pc).unwrap();
        e.link(edge, p, ms(10)).unwrap();
        for i in 0..k {
            let t = SimTime::from_micros(spread_us * i as u64 / k as u64);
            let mut w = Workload::new(RequestProcess::Schedule(vec![t]), NameDist::Fixed(n("/p/hot")));
            w.max_requests = Some(1);
            let c = e.add_endpoint(&format!("c{i}"), Box::new(Consumer::new(w))).unwrap();
            e.link(c, edge, ms(1)).unwrap();
        }
        e.auto_route();
        e.run_until(SimTime::from_secs(1)).unwrap();
        let m = e.metrics();
        prop_assert_eq!(m.get("p", "served"), Some(1.0));
        for i in 0..k {
            prop_assert_eq!(m.get(&format!("c{i}"), "satisfied"), Some(1.0));
        }
    }

    #[test]
    fn enumeration_finds_exactly_the_cached_subset(items in prop::collection::btree_set(0u32..40, 0..15)) {
        let mut e = Engine::new(2);
        let edge = e.add_router("edge", RouterConfig::default()).unwrap();
        let p = e.add_producer("p", ProducerConfig::new(n("/p"))).unwrap();
        let q = e.add_producer("q", ProducerConfig::new(n("/q"))).unwrap();
        e.link(edge, p, ms(5)).unwrap();
        e.link(edge, q, ms(5)).unwrap();
        // odd items live under /q and must not show up
        let names: Vec<Name> = items.iter().map(|i| n(&format!("/{}/{i}", if i % 2 == 0 { "p" } else { "q" }))).collect();
        let times = (0..names.len() as u64).map(|i| SimTime::from_millis(2 * i)).collect::<Vec<_>>();
        let mut w = Workload::new(RequestProcess::Schedule(times), NameDist::Sequence(names.clone()));
        w.max_requests = Some(names.len() as u64);
        let c = e.add_endpoint("c", Box::new(Consumer::new(w))).unwrap();
        e.link(c, edge, ms(1)).unwrap();
        e.auto_route();
        e.run_until(SimTime::from_secs(1)).unwrap();
        let oracle: BTreeSet<Name> = e.router(edge).unwrap().cs().names().filter(|x| n("/p").is_prefix_of(x)).cloned().collect();
        let found = enumerate_cache(&mut e, edge, &n("/p"), 1000).unwrap();
        prop_assert_eq!(found.names.iter().cloned().collect::<BTreeSet<_>>(), oracle.clone());
        prop_assert_eq!(found.queries as usize, oracle.len() + 1);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    /// Every detection interval contains a real request for the target.
    #[test]
    fn timing_detections_are_sound(victims in prop::collection::btree_set(2_000u64..9_000, 0..4)) {
        let mut e = Engine::new(5);
        let cfg = RouterConfig {
            cs: CsConfig { capacity: 50, policy: CachePolicy::Lru, ..CsConfig::default() },
            ..RouterConfig::default()
        };
        let edge = e.add_router("edge", cfg).unwrap();
        let mut pc = ProducerConfig::new(n("/p"));
        pc.service = DelaySpec::ZERO;
        let p = e.add_producer("p", pc).unwrap();
        e.link(edge, p, ms(20)).unwrap();
        let bg = Workload::new(RequestProcess::Periodic { interval: ms(20) }, NameDist::Unique { prefix: n("/p/bg") });
        let b = e.add_endpoint("bg", Box::new(Consumer::new(bg))).unwrap();
        e.link(b, edge, ms(1)).unwrap();
        let times: Vec<SimTime> = victims.iter().map(|v| SimTime::from_millis(*v)).collect();
        let mut w = Workload::new(RequestProcess::Schedule(times.clone()), NameDist::Fixed(n("/p/target")));
        w.max_requests = Some(times.len() as u64);
        let v = e.add_endpoint("victim", Box::new(Consumer::new(w))).unwrap();
        e.link(v, edge, ms(1)).unwrap();
        e.auto_route();
        let state = TimingProbeState {
            t_c: ms(1000),
            epsilon: ms(200),
            calibration: RttCalibration::from_samples(&[2.0], &[42.0]).unwrap(),
            start: SimTime::from_secs(2),
            until: SimTime::from_secs(10),
            timeout: ms(500),
        };
        let found = timing_probe_loop(&mut e, edge, &n("/p/target"), state).unwrap();
        for d in &found {
            prop_assert!(times.iter().any(|t| d.contains(*t)), "{:?} vs {:?}", d, times);
        }
    }
}
