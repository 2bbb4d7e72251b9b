use ccnsim::attacks::{
    calibrate_rtt, clone_conversation, enumerate_cache, estimate_characteristic_time, parallel_cache_probing,
    timing_probe_loop, AttackError, Detection, RttCalibration, TcEstimatorConfig, TimingProbeState,
};
use ccnsim::dist::{DelaySpec, LifetimeDist};
use ccnsim::engine::{ChunkSpec, Consumer, Conversation, Engine, NameDist, NodeId, ProducerConfig, RequestProcess, Workload};
use ccnsim::names::Name;
use ccnsim::packet::segment_component;
use ccnsim::router::{CachePolicy, CsConfig, RemovalCause, RouterConfig};
use ccnsim::time::{SimDuration, SimTime};

fn n(s: &str) -> Name {
    Name::parse(s).unwrap()
}

fn ms(x: u64) -> SimDuration {
    SimDuration::from_millis(x)
}

fn at_ms(x: u64) -> SimTime {
    SimTime::from_millis(x)
}

fn schedule(names: Vec<Name>, times: Vec<SimTime>) -> Workload {
    let mut w = Workload::new(RequestProcess::Schedule(times.clone()), NameDist::Sequence(names));
    w.max_requests = Some(times.len() as u64);
    w
}

/// consumer -1ms- edge -20ms- producer("/p", zero service time).
struct Net {
    e: Engine,
    edge: NodeId,
}

fn net(router: RouterConfig, producer: ProducerConfig, consumers: Vec<Workload>) -> Net {
    let mut e = Engine::new(7);
    let edge = e.add_router("edge", router).unwrap();
    let p = e.add_producer("prod", producer).unwrap();
    e.link(edge, p, ms(20)).unwrap();
    for (i, w) in consumers.into_iter().enumerate() {
        let c = e.add_endpoint(&format!("c{i}"), Box::new(Consumer::new(w))).unwrap();
        e.link(c, edge, ms(1)).unwrap();
    }
    e.auto_route();
    Net { e, edge }
}

fn producer() -> ProducerConfig {
    let mut cfg = ProducerConfig::new(n("/p"));
    cfg.service = DelaySpec::ZERO;
    cfg
}

fn with_cached(names: &[&str], router: RouterConfig) -> Net {
    let list: Vec<Name> = names.iter().map(|s| n(s)).collect();
    let times = (0..list.len() as u64).map(|i| at_ms(10 * i)).collect();
    let mut net = net(router, producer(), vec![schedule(list, times)]);
    net.e.run_until(SimTime::from_secs(1)).unwrap();
    net
}

#[test]
fn enumerates_two_cached_names_in_three_queries() {
    let mut net = with_cached(&["/p/x", "/p/y"], RouterConfig::default());
    let found = enumerate_cache(&mut net.e, net.edge, &n("/p"), 100).unwrap();
    let mut names: Vec<String> = found.names.iter().map(|x| x.to_string()).collect();
    names.sort();
    assert_eq!(names, ["/p/x", "/p/y"]);
    assert_eq!(found.queries, 3);
    assert!(!found.blocked);
}

#[test]
fn empty_cache_takes_one_query() {
    let mut net = with_cached(&[], RouterConfig::default());
    let found = enumerate_cache(&mut net.e, net.edge, &n("/p"), 100).unwrap();
    assert!(found.names.is_empty());
    assert_eq!(found.queries, 1);
}

#[test]
fn k_names_take_k_plus_one_queries() {
    let names: Vec<String> = (0..7).map(|i| format!("/p/item{i}")).collect();
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let mut net = with_cached(&refs, RouterConfig::default());
    let found = enumerate_cache(&mut net.e, net.edge, &n("/p"), 100).unwrap();
    assert_eq!(found.names.len(), 7);
    assert_eq!(found.queries, 8);
    // enumeration is non-invasive: nothing new was cached
    assert_eq!(net.e.router(net.edge).unwrap().cs().len(), 7);
}

#[test]
fn limit_stops_enumeration_early() {
    let mut net = with_cached(&["/p/a", "/p/b", "/p/c"], RouterConfig::default());
    let found = enumerate_cache(&mut net.e, net.edge, &n("/p"), 2).unwrap();
    assert_eq!(found.names.len(), 2);
    assert_eq!(found.queries, 2);
}

#[test]
fn ignoring_excludes_stops_enumeration_at_one_name() {
    let cfg = RouterConfig { allow_exclude: false, ..RouterConfig::default() };
    let mut net = with_cached(&["/p/a", "/p/b", "/p/c"], cfg);
    let found = enumerate_cache(&mut net.e, net.edge, &n("/p"), 100).unwrap();
    assert_eq!(found.names.len(), 1);
    assert!(found.blocked);
}

#[test]
fn calibration_threshold_is_midpoint() {
    let cal = RttCalibration::from_samples(&[2.0, 2.0], &[40.0, 40.0]).unwrap();
    assert_eq!(cal.threshold_ms, 21.0);
    assert!(cal.reliable);
    assert!(cal.is_hit(ms(20)));
    assert!(!cal.is_hit(ms(22)));
}

#[test]
fn overlapping_samples_are_unreliable() {
    let cal = RttCalibration::from_samples(&[2.0, 50.0], &[40.0, 42.0]).unwrap();
    assert!(!cal.reliable);
    assert!(cal.margin_ms < 0.0);
}

#[test]
fn calibration_needs_samples() {
    assert_eq!(RttCalibration::from_samples(&[], &[1.0]), Err(AttackError::NoSamples));
    let mut net = with_cached(&["/p/x"], RouterConfig::default());
    assert_eq!(calibrate_rtt(&mut net.e, net.edge, &n("/p/x"), &n("/p/fresh"), 0), Err(AttackError::NoSamples));
}

#[test]
fn calibration_against_a_live_edge() {
    let mut net = with_cached(&["/p/x"], RouterConfig::default());
    let cal = calibrate_rtt(&mut net.e, net.edge, &n("/p/x"), &n("/p/fresh"), 5).unwrap();
    assert_eq!(cal.hit_mean_ms, 2.0);
    assert_eq!(cal.miss_mean_ms, 42.0);
    assert_eq!(cal.threshold_ms, 22.0);
    assert!(cal.reliable);
}

fn background(period: SimDuration) -> Workload {
    Workload::new(RequestProcess::Periodic { interval: period }, NameDist::Unique { prefix: n("/p/bg") })
}

fn lru(capacity: usize) -> RouterConfig {
    RouterConfig {
        cs: CsConfig { capacity, policy: CachePolicy::Lru, record_removals: true, ..CsConfig::default() },
        ..RouterConfig::default()
    }
}

/// Mean time from last access to capacity eviction among background objects.
fn lru_ground_truth_ms(e: &Engine, edge: NodeId, after: SimTime) -> f64 {
    let bg = n("/p/bg");
    let xs: Vec<f64> = e
        .router(edge)
        .unwrap()
        .cs()
        .removals()
        .iter()
        .filter(|r| r.cause == RemovalCause::Capacity && r.at > after && bg.is_prefix_of(&r.name))
        .map(|r| r.at.since(r.last_access).as_millis_f64())
        .collect();
    xs.iter().sum::<f64>() / xs.len() as f64
}

#[test]
fn characteristic_time_of_loaded_lru_cache() {
    let mut net = net(lru(50), producer(), vec![background(ms(20))]);
    net.e.run_until(SimTime::from_secs(2)).unwrap();
    let est = estimate_characteristic_time(&mut net.e, net.edge, TcEstimatorConfig::new(n("/p/probe"))).unwrap();
    let truth = lru_ground_truth_ms(&net.e, net.edge, SimTime::from_secs(2));
    let point = est.point().expect("stable estimate").as_millis_f64();
    assert!((point - truth).abs() / truth <= 0.10, "estimate {point} vs truth {truth}");
    assert!(!est.high_variance);
}

#[test]
fn characteristic_time_of_fixed_lifetime_fifo() {
    let cfg = RouterConfig {
        cs: CsConfig {
            capacity: 1000,
            policy: CachePolicy::Fifo,
            lifetime: LifetimeDist::Fixed(SimDuration::from_secs(1)),
            ..CsConfig::default()
        },
        ..RouterConfig::default()
    };
    let mut net = net(cfg, producer(), vec![]);
    let est = estimate_characteristic_time(&mut net.e, net.edge, TcEstimatorConfig::new(n("/p/probe"))).unwrap();
    let point = est.point().unwrap().as_millis_f64();
    assert!((point - 1000.0).abs() <= 100.0, "{point}");
}

#[test]
fn random_lifetimes_are_reported_as_high_variance() {
    let cfg = RouterConfig {
        cs: CsConfig {
            capacity: 1000,
            policy: CachePolicy::Fifo,
            lifetime: LifetimeDist::Uniform { lo: ms(500), hi: SimDuration::from_secs(2) },
            ..CsConfig::default()
        },
        ..RouterConfig::default()
    };
    let mut net = net(cfg, producer(), vec![]);
    let mut tc = TcEstimatorConfig::new(n("/p/probe"));
    tc.repetitions = 20;
    let est = estimate_characteristic_time(&mut net.e, net.edge, tc).unwrap();
    assert!(est.high_variance, "{:?}", est);
    assert!(est.cv.unwrap() > 0.25, "{:?}", est.cv);
    assert_eq!(est.point(), None);
}

#[test]
fn cache_that_never_evicts_is_unbounded() {
    let mut net = net(RouterConfig::default(), producer(), vec![]);
    let mut tc = TcEstimatorConfig::new(n("/p/probe"));
    tc.max_gap = SimDuration::from_secs(5);
    let est = estimate_characteristic_time(&mut net.e, net.edge, tc).unwrap();
    assert!(est.unbounded);
    assert_eq!(est.point(), None);
}

const T_C: u64 = 1000;
const EPS: u64 = 200;
const START: u64 = 2000;

fn probe_state(until: u64) -> TimingProbeState {
    TimingProbeState {
        t_c: ms(T_C),
        epsilon: ms(EPS),
        calibration: RttCalibration::from_samples(&[2.0], &[42.0]).unwrap(),
        start: at_ms(START),
        until: at_ms(until),
        timeout: ms(500),
    }
}

fn chunked_producer() -> ProducerConfig {
    let mut cfg = producer();
    cfg.chunks = Some(ChunkSpec { object_size: 4096, chunk_size: 1024 });
    cfg
}

/// Background load plus a victim fetching all four chunks of /p/target at `v` ms.
fn timing_net(router: RouterConfig, victim: Option<u64>) -> Net {
    let mut consumers = vec![background(ms(20))];
    if let Some(v) = victim {
        let names = (0..4).map(|i| n("/p/target").join(segment_component(i))).collect();
        let times = (0..4).map(|i| at_ms(v + i)).collect();
        consumers.push(schedule(names, times));
    }
    net(router, chunked_producer(), consumers)
}

fn sequential(victim: Option<u64>) -> Vec<Detection> {
    let mut net = timing_net(lru(50), victim);
    timing_probe_loop(&mut net.e, net.edge, &n("/p/target/seg=0"), probe_state(9000)).unwrap()
}

fn parallel(router: RouterConfig, victim: Option<u64>, chunks: u32) -> (Vec<Detection>, bool) {
    let mut net = timing_net(router, victim);
    let check = Some(n("/p/check/seg=1"));
    parallel_cache_probing(&mut net.e, net.edge, &n("/p/target"), chunks, check, probe_state(9000)).unwrap()
}

#[test]
fn quiet_cache_yields_no_detections() {
    assert!(sequential(None).is_empty());
    assert!(parallel(lru(50), None, 4).0.is_empty());
}

#[test]
fn victim_outside_blind_spot_is_detected() {
    // probes at 2.0, 3.2, 4.4, ... s; a request at 3.8 s is seen by the 4.4 s probe
    let v = 3800;
    let found = sequential(Some(v));
    assert_eq!(found.len(), 1, "{found:?}");
    assert!(found[0].contains(at_ms(v)));
    assert_eq!(found[0].to, at_ms(4400));
}

#[test]
fn blind_spot_is_covered_by_parallel_probing() {
    // 100 ms after a probe: inside the sequential blind spot
    let v = 3300;
    assert!(sequential(Some(v)).is_empty());
    let (found, blocked) = parallel(lru(50), Some(v), 4);
    assert!(!blocked);
    assert!(!found.is_empty());
    assert!(found.iter().all(|d| d.contains(at_ms(v))), "{found:?}");
}

#[test]
fn single_chunk_parallel_equals_sequential() {
    for v in [3300, 3800, 6100] {
        let seq = sequential(Some(v));
        let (par, _) = parallel(lru(50), Some(v), 1);
        assert_eq!(seq, par);
    }
}

#[test]
fn chunk_blocking_forces_sequential_fallback() {
    let cfg = RouterConfig { allow_chunk_requests: false, ..lru(50) };
    let (found, blocked) = parallel(cfg.clone(), Some(3300), 4);
    assert!(blocked);
    assert!(found.is_empty());
    let (found, blocked) = parallel(cfg, Some(3800), 4);
    assert!(blocked);
    assert_eq!(found.len(), 1);
    assert_eq!(found[0].chunk, 0);
}

fn call(opaque: bool) -> (Engine, NodeId, Name) {
    let prefix = n("/voccn/call/alice");
    let conv = Conversation { prefix: prefix.clone(), messages: 10, start: at_ms(100), interval: ms(200), opaque };
    let mut cfg = ProducerConfig::new(n("/voccn"));
    cfg.service = DelaySpec::ZERO;
    cfg.conversation = Some(conv.clone());
    let mut e = Engine::new(3);
    let edge = e.add_router("edge", RouterConfig::default()).unwrap();
    let alice = e.add_producer("alice", cfg).unwrap();
    e.link(edge, alice, ms(10)).unwrap();
    let mut w = Workload::new(
        RequestProcess::Periodic { interval: ms(200) },
        NameDist::Conversation { conversation: conv, publisher: "alice".to_string() },
    );
    w.start = at_ms(100);
    w.max_requests = Some(10);
    let bob = e.add_endpoint("bob", Box::new(Consumer::new(w))).unwrap();
    e.link(bob, edge, ms(1)).unwrap();
    e.auto_route();
    e.run_until(at_ms(750)).unwrap();
    (e, edge, prefix)
}

#[test]
fn predictable_conversation_is_cloned() {
    let (mut e, edge, prefix) = call(false);
    let report = clone_conversation(&mut e, edge, &prefix, SimTime::from_secs(3)).unwrap();
    assert!(!report.blocked);
    assert_eq!(report.snapshot.len(), 4);
    let mut got: Vec<String> = report.fetched.iter().map(|f| f.name.to_string()).collect();
    got.sort_by_key(|s| s.rsplit('/').next().unwrap().parse::<u32>().unwrap());
    let want: Vec<String> = (1..=10).map(|k| format!("/voccn/call/alice/{k}")).collect();
    assert_eq!(got, want);
    assert_eq!(report.predicted(), 6);
    // predicted messages arrive no earlier than their publication
    for f in report.fetched.iter().filter(|f| !f.from_snapshot) {
        let k: u64 = f.name.last().unwrap().parse().unwrap();
        assert!(f.at >= at_ms(100 + 200 * (k - 1)));
    }
}

#[test]
fn opaque_conversation_cannot_be_extrapolated() {
    let (mut e, edge, prefix) = call(true);
    let report = clone_conversation(&mut e, edge, &prefix, SimTime::from_secs(3)).unwrap();
    assert!(report.blocked);
    assert_eq!(report.predicted(), 0);
    assert_eq!(report.snapshot.len(), 4);
}
