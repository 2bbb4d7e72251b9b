//! End-to-end acceptance checks, one line per criterion.
//!
//! Run with `cargo test -p ccnsim-cli --test acceptance`. Exits nonzero if any
//! criterion fails.

use std::collections::BTreeSet;
use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;

use ccnsim::attacks::{
    enumerate_cache, estimate_characteristic_time, parallel_cache_probing, timing_probe_loop, RttCalibration,
    TcEstimatorConfig, TimingProbeState,
};
use ccnsim::crypto::Verification;
use ccnsim::defenses::DetectorKind;
use ccnsim::engine::{Consumer, Engine, NameDist, NodeId, ProducerConfig, RequestProcess, Workload};
use ccnsim::names::Name;
use ccnsim::overlay::{add_relay, measure_overhead, OverlayConsumer, RelayInfo};
use ccnsim::rng::RngStreams;
use ccnsim::router::{RemovalCause, RouterConfig};
use ccnsim::time::{SimDuration, SimTime};
use ccnsim_cli::run::{csv_bytes, METRICS_HEADER};
use ccnsim_cli::sweep::set_path;
use ccnsim_cli::{build_engine, corpus, run_config, RunOptions, ScenarioConfig};
use rand::Rng;

type Outcome = Result<String, String>;

fn n(s: &str) -> Name {
    Name::parse(s).unwrap()
}

fn ms(x: u64) -> SimDuration {
    SimDuration::from_millis(x)
}

fn at_ms(x: u64) -> SimTime {
    SimTime::from_millis(x)
}

fn config(text: &str) -> ScenarioConfig {
    ScenarioConfig::from_toml(text).unwrap_or_else(|e| panic!("scenario: {e}"))
}

/// Applies `(path, value)` overrides to a scenario document.
fn tweak(text: &str, sets: &[(&str, toml::Value)]) -> ScenarioConfig {
    let mut doc: toml::Value = toml::from_str(text).unwrap();
    for (p, v) in sets {
        set_path(&mut doc, p, v.clone()).unwrap();
    }
    ScenarioConfig::from_value(doc).unwrap_or_else(|e| panic!("scenario: {e}"))
}

fn engine(cfg: &ScenarioConfig, seed: u64) -> Engine {
    build_engine(cfg, seed).unwrap()
}

fn run(cfg: &ScenarioConfig, seed: u64) -> Engine {
    let mut e = engine(cfg, seed);
    e.run_until(SimTime::from_millis_f64(cfg.t_end_ms)).unwrap();
    e
}

fn metric(e: &Engine, entity: &str, name: &str) -> f64 {
    e.metrics().get(entity, name).unwrap_or_else(|| panic!("no metric {entity}/{name}"))
}

fn id(e: &Engine, name: &str) -> NodeId {
    e.node_id(name).unwrap()
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

// ---------------------------------------------------------------- 1

fn aggregation_scenario(consumers: usize) -> String {
    let mut s = String::from(
        "schema_version = 1\nid = \"agg\"\nt_end_ms = 2000\n\
         [[routers]]\nname = \"r\"\ncache = { capacity = 0 }\n\
         [[producers]]\nname = \"p\"\nprefix = \"/p\"\n\
         [[links]]\na = \"r\"\nb = \"p\"\ndelay_ms = 10\n",
    );
    for i in 0..consumers {
        s += &format!(
            "[[consumers]]\nname = \"c{i}\"\nprocess = {{ kind = \"schedule\", at_ms = [0, 1000] }}\n\
             names = {{ kind = \"fixed\", name = \"/p/x\" }}\n\
             [[links]]\na = \"c{i}\"\nb = \"r\"\ndelay_ms = 1\n"
        );
    }
    s
}

/// Simultaneous interests for one name leave the router once per PIT generation.
fn c1() -> Outcome {
    let mut parts = Vec::new();
    for k in [2usize, 10, 100] {
        let cfg = config(&aggregation_scenario(k));
        let mut e = engine(&cfg, 1);
        e.enable_trace(true);
        e.run_until(at_ms(2000)).unwrap();
        let upstream = e.trace().unwrap().records().filter(|r| r.node == "p" && r.kind == "interest").count();
        let forwarded = metric(&e, "r", "forwarded") as usize;
        let aggregated = metric(&e, "r", "aggregated") as usize;
        let satisfied: f64 = (0..k).map(|i| metric(&e, &format!("c{i}"), "satisfied")).sum();
        parts.push(format!("N={k}: upstream {upstream}/2 generations"));
        if upstream != 2 || forwarded != 2 || aggregated != 2 * (k - 1) || satisfied as usize != 2 * k {
            return Err(format!(
                "N={k}: upstream {upstream}, forwarded {forwarded}, aggregated {aggregated}, satisfied {satisfied}"
            ));
        }
    }
    Ok(parts.join(", "))
}

// ---------------------------------------------------------------- 2

/// A second requester behind the same router is answered faster.
fn c2() -> Outcome {
    let text = corpus::get("figures-1-5").unwrap();
    let mut service = toml::Table::new();
    service.insert("min_ms".into(), 5.0.into());
    service.insert("jitter_ms".into(), 10.0.into());
    let cfg = tweak(text, &[("producers.cnn.service", toml::Value::Table(service))]);
    let mut faster = 0;
    let mut gains = Vec::new();
    for seed in 1..=100 {
        let e = run(&cfg, seed);
        let first = e.endpoint(id(&e, "h1")).unwrap().stats.rtts_ms[0];
        let second = e.endpoint(id(&e, "h2")).unwrap().stats.rtts_ms[0];
        if second < first {
            faster += 1;
        }
        gains.push(first - second);
    }
    check(faster == 100, format!("second requester faster in {faster}/100 seeds, mean gain {:.1} ms", mean(&gains)))
}

// ---------------------------------------------------------------- 3

fn frozen_cache(names: &[String]) -> String {
    let times: Vec<String> = (0..names.len()).map(|i| (10 * i).to_string()).collect();
    let list: Vec<String> = names.iter().map(|x| format!("\"{x}\"")).collect();
    let mut s = String::from(
        "schema_version = 1\nid = \"frozen\"\nt_end_ms = 2000\n\
         [[routers]]\nname = \"edge\"\ncache = { capacity = 500 }\n\
         [[producers]]\nname = \"p\"\nprefix = \"/p\"\nservice = { min_ms = 0 }\n\
         [[producers]]\nname = \"q\"\nprefix = \"/q\"\nservice = { min_ms = 0 }\n\
         [[links]]\na = \"edge\"\nb = \"p\"\ndelay_ms = 20\n\
         [[links]]\na = \"edge\"\nb = \"q\"\ndelay_ms = 20\n",
    );
    if !names.is_empty() {
        s += &format!(
            "[[consumers]]\nname = \"filler\"\nprocess = {{ kind = \"schedule\", at_ms = [{}] }}\n\
             names = {{ kind = \"sequence\", names = [{}] }}\n\
             [[links]]\na = \"filler\"\nb = \"edge\"\ndelay_ms = 1\n",
            times.join(", "),
            list.join(", ")
        );
    }
    s
}

/// Enumeration of a frozen cache returns exactly its contents in K+1 queries.
fn c3() -> Outcome {
    let mut runs = 0;
    for (seed, k) in [0usize, 1, 2, 5, 17, 33, 64].into_iter().enumerate() {
        let mut rng = RngStreams::new(seed as u64).stream("acceptance/enumeration");
        let mut picked = BTreeSet::new();
        while picked.len() < k {
            picked.insert(rng.random_range(0..1000u32));
        }
        let mut names: Vec<String> = picked.iter().map(|i| format!("/p/item{i}/v{}", i % 3)).collect();
        // unrelated content must not show up
        names.extend((0..5).map(|i| format!("/q/other{i}")));
        let cfg = config(&frozen_cache(&names));
        let mut e = run(&cfg, seed as u64);
        let edge = id(&e, "edge");
        let prefix = n("/p");
        let oracle: BTreeSet<String> =
            e.router(edge).unwrap().cs().names().filter(|x| prefix.is_prefix_of(x)).map(|x| x.to_string()).collect();
        let found = enumerate_cache(&mut e, edge, &prefix, 1000).unwrap();
        let got: BTreeSet<String> = found.names.iter().map(|x| x.to_string()).collect();
        if oracle.len() != k || got != oracle || found.queries != k as u64 + 1 {
            return Err(format!("K={k}: found {} of {} in {} queries", got.len(), oracle.len(), found.queries));
        }
        runs += 1;
    }
    Ok(format!("{runs} cache sizes from 0 to 64, exact sets in K+1 queries"))
}

// ---------------------------------------------------------------- 4

const FIFO_FIXED: &str = r#"
schema_version = 1
id = "fifo"
t_end_ms = 1
[[routers]]
name = "edge"
cache = { capacity = 1000, policy = "fifo", lifetime_ms = 1000 }
[[producers]]
name = "p"
prefix = "/p"
service = { min_ms = 0 }
[[links]]
a = "edge"
b = "p"
delay_ms = 20
"#;

const LRU_LOADED: &str = r#"
schema_version = 1
id = "lru"
t_end_ms = 2000
[[routers]]
name = "edge"
cache = { capacity = 50, record_removals = true }
[[producers]]
name = "p"
prefix = "/p"
service = { min_ms = 0 }
[[consumers]]
name = "load"
process = { kind = "periodic", interval_ms = 20 }
names = { kind = "unique", prefix = "/p/bg" }
[[links]]
a = "edge"
b = "p"
delay_ms = 20
[[links]]
a = "load"
b = "edge"
delay_ms = 1
"#;

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
    mean(&xs)
}

/// Characteristic-time estimates land within 10% of the simulator's own value.
fn c4() -> Outcome {
    let fifo = config(FIFO_FIXED);
    let mut worst_fifo: f64 = 0.0;
    for seed in 1..=20 {
        let mut e = engine(&fifo, seed);
        let edge = id(&e, "edge");
        let est = estimate_characteristic_time(&mut e, edge, TcEstimatorConfig::new(n("/p/probe"))).unwrap();
        let point = est.point().map(|d| d.as_millis_f64()).ok_or_else(|| format!("FIFO seed {seed}: no estimate"))?;
        let err = (point - 1000.0).abs() / 1000.0;
        if err > 0.10 {
            return Err(format!("FIFO seed {seed}: {point:.0} ms vs 1000 ms"));
        }
        worst_fifo = worst_fifo.max(err);
    }
    let mut lru = tweak(LRU_LOADED, &[]);
    let mut worst_lru: f64 = 0.0;
    for seed in 1..=20 {
        // vary the background phase per seed
        let phase = RngStreams::new(seed).stream("acceptance/phase").random_range(0.0..20.0);
        lru.consumers[0].start_ms = phase;
        let mut e = run(&lru, seed);
        let edge = id(&e, "edge");
        let est = estimate_characteristic_time(&mut e, edge, TcEstimatorConfig::new(n("/p/probe"))).unwrap();
        let truth = lru_ground_truth_ms(&e, edge, at_ms(2000));
        let point = est.point().map(|d| d.as_millis_f64()).ok_or_else(|| format!("LRU seed {seed}: no estimate"))?;
        let err = (point - truth).abs() / truth;
        if err > 0.10 {
            return Err(format!("LRU seed {seed}: {point:.0} ms vs truth {truth:.0} ms"));
        }
        worst_lru = worst_lru.max(err);
    }
    Ok(format!("20/20 FIFO (worst {:.1}%), 20/20 LRU (worst {:.1}%)", worst_fifo * 100.0, worst_lru * 100.0))
}

// ---------------------------------------------------------------- 5

const T_C: u64 = 1000;
const EPS: u64 = 200;
const START: u64 = 2000;
const UNTIL: u64 = 9000;

fn timing_scenario(victim: Option<u64>, phase_ms: f64) -> ScenarioConfig {
    let mut s = format!(
        r#"
schema_version = 1
id = "timing"
t_end_ms = {UNTIL}
[[routers]]
name = "edge"
cache = {{ capacity = 50 }}
[[producers]]
name = "p"
prefix = "/p"
service = {{ min_ms = 0 }}
chunking = {{ object_size = 4096, chunk_size = 1024 }}
[[consumers]]
name = "load"
process = {{ kind = "periodic", interval_ms = 20 }}
names = {{ kind = "unique", prefix = "/p/bg" }}
start_ms = {phase_ms}
[[links]]
a = "edge"
b = "p"
delay_ms = 20
[[links]]
a = "load"
b = "edge"
delay_ms = 1
"#
    );
    if let Some(v) = victim {
        s += &format!(
            "[[consumers]]\nname = \"victim\"\nprocess = {{ kind = \"schedule\", at_ms = [{v}, {}, {}, {}] }}\n\
             names = {{ kind = \"chunks\", base = \"/p/target\", total = 4 }}\n\
             [[links]]\na = \"victim\"\nb = \"edge\"\ndelay_ms = 1\n",
            v + 1,
            v + 2,
            v + 3
        );
    }
    config(&s)
}

fn probe_state() -> TimingProbeState {
    TimingProbeState {
        t_c: ms(T_C),
        epsilon: ms(EPS),
        calibration: RttCalibration::from_samples(&[2.0], &[42.0]).unwrap(),
        start: at_ms(START),
        until: at_ms(UNTIL),
        timeout: ms(500),
    }
}

fn sequential(cfg: &ScenarioConfig, seed: u64) -> Vec<ccnsim::attacks::Detection> {
    let mut e = engine(cfg, seed);
    let edge = id(&e, "edge");
    timing_probe_loop(&mut e, edge, &n("/p/target/seg=0"), probe_state()).unwrap()
}

fn parallel(cfg: &ScenarioConfig, seed: u64) -> Vec<ccnsim::attacks::Detection> {
    let mut e = engine(cfg, seed);
    let edge = id(&e, "edge");
    parallel_cache_probing(&mut e, edge, &n("/p/target"), 4, Some(n("/p/check/seg=1")), probe_state()).unwrap().0
}

/// Sequential probing sees requests outside its blind spot and nothing on a
/// quiet cache; chunk-parallel probing covers the blind spot.
fn c5() -> Outcome {
    let period = T_C + EPS;
    let (mut false_hits, mut outside_seen, mut paired) = (0, 0, 0);
    for seed in 1..=100u64 {
        let mut rng = RngStreams::new(seed).stream("acceptance/victim");
        let phase = rng.random_range(0.0..20.0);
        let q = START + period * rng.random_range(0..5u64);

        let quiet = timing_scenario(None, phase);
        false_hits += sequential(&quiet, seed).len() + parallel(&quiet, seed).len();

        // the victim's three extra chunks take cache slots and shorten t_c by
        // about 60 ms, plus one 20 ms background step; keep clear of that
        let v = q + rng.random_range(EPS + 100..period - 20);
        let found = sequential(&timing_scenario(Some(v), phase), seed);
        if !found.is_empty() && found.iter().all(|d| d.contains(at_ms(v))) {
            outside_seen += 1;
        }

        let v = q + rng.random_range(20..EPS - 20);
        let cfg = timing_scenario(Some(v), phase);
        let seq = sequential(&cfg, seed);
        let par = parallel(&cfg, seed);
        if seq.is_empty() && !par.is_empty() && par.iter().all(|d| d.contains(at_ms(v))) {
            paired += 1;
        }
    }
    check(
        false_hits == 0 && outside_seen == 100 && paired >= 95,
        format!(
            "quiet false detections {false_hits}; outside blind spot {outside_seen}/100; \
             inside: sequential miss + parallel catch {paired}/100"
        ),
    )
}

// ---------------------------------------------------------------- 6

const NO_CACHE: &str = r#"
schema_version = 1
id = "no-cache"
t_end_ms = 5000
[[routers]]
name = "edge"
honor_no_cache = true
[[routers]]
name = "core"
honor_no_cache = true
[[producers]]
name = "private"
prefix = "/private"
no_cache = true
[[producers]]
name = "public"
prefix = "/public"
[[consumers]]
name = "a"
process = { kind = "poisson", rate = 20 }
names = { kind = "uniform", prefix = "/private", catalog = 10 }
[[consumers]]
name = "b"
process = { kind = "poisson", rate = 20 }
names = { kind = "uniform", prefix = "/public", catalog = 10 }
[[links]]
a = "a"
b = "edge"
delay_ms = 1
[[links]]
a = "b"
b = "edge"
delay_ms = 1
[[links]]
a = "edge"
b = "core"
delay_ms = 5
[[links]]
a = "core"
b = "private"
delay_ms = 5
[[links]]
a = "core"
b = "public"
delay_ms = 5
"#;

fn cached_under(e: &Engine, prefix: &str) -> usize {
    e.cached_names_in_trace().iter().filter(|(_, name)| name.starts_with(prefix)).count()
}

/// Hit delays blind the classifier, random lifetimes blur the characteristic
/// time, and routers that honor no-cache never store flagged content.
fn c6() -> Outcome {
    let hd = config(corpus::get("hit-delay").unwrap());
    let mut accs = Vec::new();
    for seed in 1..=3 {
        let out = run_config(&hd, "hit-delay", &RunOptions { seed: Some(seed), ..Default::default() }).unwrap();
        let get = |m: &str| out.metrics.iter().find(|r| r.entity == "prober" && r.metric == m).map(|r| r.value);
        let (acc, trials) = (get("classifier_accuracy").unwrap(), get("classified").unwrap());
        if !(0.45..=0.55).contains(&acc) || trials < 1000.0 {
            return Err(format!("hit delay seed {seed}: accuracy {acc:.3} over {trials} probes"));
        }
        accs.push(format!("{acc:.3}"));
    }

    let uniform: toml::Value = toml::Value::Array(vec![100.into(), 3000.into()]);
    let rand_life = tweak(FIFO_FIXED, &[("routers.edge.cache.lifetime_ms", uniform)]);
    let mut cvs = Vec::new();
    for seed in 1..=10 {
        let mut e = engine(&rand_life, seed);
        let edge = id(&e, "edge");
        let mut tc = TcEstimatorConfig::new(n("/p/probe"));
        tc.repetitions = 20;
        let est = estimate_characteristic_time(&mut e, edge, tc).unwrap();
        let cv = est.cv.unwrap_or(0.0);
        if cv <= 0.25 || !est.high_variance {
            return Err(format!("random lifetimes seed {seed}: cv {cv:.3}"));
        }
        cvs.push(format!("{cv:.2}"));
    }

    let honored = config(NO_CACHE);
    let mut e = engine(&honored, 1);
    e.enable_trace(true);
    e.run_until(at_ms(5000)).unwrap();
    let (private, public, violations) = (cached_under(&e, "/private"), cached_under(&e, "/public"), e.no_cache_violations());
    let ignored = tweak(
        NO_CACHE,
        &[("routers.edge.honor_no_cache", false.into()), ("routers.core.honor_no_cache", false.into())],
    );
    let mut e = engine(&ignored, 1);
    e.enable_trace(true);
    e.run_until(at_ms(5000)).unwrap();
    let leaked = cached_under(&e, "/private");
    if private != 0 || violations != 0 || public == 0 || leaked == 0 {
        return Err(format!(
            "no-cache: {private} private cache records ({violations} violations), {public} public, {leaked} when not honored"
        ));
    }
    Ok(format!(
        "classifier accuracy {}; Tc cv {}; no-cache content cached 0 times ({leaked} when ignored)",
        accs.join("/"),
        cvs.join("/")
    ))
}

// ---------------------------------------------------------------- 7

const COLLUSION: &str = r#"
schema_version = 1
id = "collusion"
t_end_ms = 8000
warmup_ms = 3000
[[routers]]
name = "edge"
pit_capacity = 100000
[[producers]]
name = "origin"
prefix = "/site"
service = { min_ms = 20 }
[[links]]
a = "edge"
b = "origin"
delay_ms = 1
[[attacks]]
kind = "flood"
name = "bot"
edges = ["edge"]
variant = "distinct_names"
prefix = "/site"
rate = 500
start_ms = 1000
"#;

/// Flood PIT occupancy follows min(rate × timeout, capacity); a colluding slow
/// origin multiplies it.
fn c7() -> Outcome {
    let text = corpus::get("ifa-nonexistent").unwrap();
    let steady = |cap: i64| {
        tweak(
            text,
            &[
                ("warmup_ms", 6000.into()),
                ("t_end_ms", 14000.into()),
                ("attacks.0.stop_ms", 14000.into()),
                ("routers.edge.pit_capacity", cap.into()),
            ],
        )
    };
    let mut parts = Vec::new();
    for (cap, expected) in [(10000, 2000.0), (1200, 1200.0)] {
        let cfg = steady(cap);
        for seed in 1..=3 {
            let occ = metric(&run(&cfg, seed), "edge", "pit_mean");
            if (occ - expected).abs() > 0.10 * expected {
                return Err(format!("capacity {cap} seed {seed}: PIT mean {occ:.0} vs {expected}"));
            }
            if seed == 1 {
                parts.push(format!("cap {cap}: {occ:.0} (expect {expected})"));
            }
        }
    }
    let honest = config(COLLUSION);
    let colluding = tweak(
        COLLUSION,
        &[("producers.origin.colluding_slow_ms", 200.into()), ("attacks.0.variant", "collusion".into())],
    );
    let base = metric(&run(&honest, 1), "edge", "pit_mean");
    let slow = metric(&run(&colluding, 1), "edge", "pit_mean");
    let ratio = slow / base;
    parts.push(format!("collusion {slow:.0} vs {base:.0} ({ratio:.1}x)"));
    check(ratio >= 5.0, parts.join("; "))
}

// ---------------------------------------------------------------- 8

/// A per-domain limit keeps the flood's damage on the attacked prefix.
fn c8() -> Outcome {
    let text = corpus::get("ifa-limiter").unwrap();
    let base = {
        let mut c = tweak(text, &[("routers.edge.per_domain_limit", "inf".into())]);
        c.attacks.clear();
        c
    };
    let open = tweak(text, &[("routers.edge.per_domain_limit", "inf".into())]);
    let limited = config(text);
    let sat = |cfg: &ScenarioConfig, who: &str| mean(&(1..=5).map(|s| metric(&run(cfg, s), who, "satisfaction_ratio")).collect::<Vec<_>>());
    let (reader0, client0) = (sat(&base, "reader"), sat(&base, "client"));
    let reader_open = sat(&open, "reader");
    let (reader1, client1) = (sat(&limited, "reader"), sat(&limited, "client"));
    check(
        reader1 >= 0.75 * reader0 && client1 <= 0.5 * client0,
        format!(
            "other prefix {reader1:.2} vs baseline {reader0:.2} (no limiter {reader_open:.2}); \
             attacked prefix {client1:.2} vs baseline {client0:.2}"
        ),
    )
}

// ---------------------------------------------------------------- 9

const POLLUTION: &str = r#"
schema_version = 1
id = "pollution"
t_end_ms = 45000
warmup_ms = 15000
[[routers]]
name = "edge"
cache = { capacity = 50 }
[[routers]]
name = "core"
cache = { capacity = 0 }
[[producers]]
name = "origin"
prefix = "/video"
[[producers]]
name = "junkyard"
prefix = "/junk"
service = { min_ms = 1 }
[[consumers]]
name = "u1"
process = { kind = "poisson", rate = 20 }
names = { kind = "zipf", prefix = "/video", catalog = 200, alpha = 1.0 }
[[consumers]]
name = "u2"
process = { kind = "poisson", rate = 20 }
names = { kind = "zipf", prefix = "/video", catalog = 200, alpha = 1.0 }
[[consumers]]
name = "u3"
process = { kind = "poisson", rate = 20 }
names = { kind = "zipf", prefix = "/video", catalog = 200, alpha = 1.0 }
[[links]]
a = "u1"
b = "edge"
delay_ms = 1
[[links]]
a = "u2"
b = "edge"
delay_ms = 1
[[links]]
a = "u3"
b = "edge"
delay_ms = 1
[[links]]
a = "edge"
b = "core"
delay_ms = 5
[[links]]
a = "core"
b = "origin"
delay_ms = 10
[[links]]
a = "core"
b = "junkyard"
delay_ms = 10
[[attacks]]
kind = "pollution"
name = "polluter"
edges = ["edge", "edge"]
prefix = "/junk"
rate = 200
start_ms = 5000
"#;

fn legit_hit_rate(e: &Engine) -> f64 {
    let edge = id(e, "edge");
    let r = e.router(edge).unwrap();
    let (mut lookups, mut hits) = (0, 0);
    for u in ["u1", "u2", "u3"] {
        let tally = r.counters.per_face[&e.face_toward(edge, id(e, u)).unwrap()];
        lookups += tally.lookups;
        hits += tally.hits;
    }
    hits as f64 / lookups as f64
}

fn pollution_flags(e: &Engine) -> (usize, usize) {
    let edge = id(e, "edge");
    let bots: Vec<_> = ["polluter-0", "polluter-1"]
        .iter()
        .filter_map(|b| e.node_id(b).ok())
        .filter_map(|b| e.face_toward(edge, b))
        .collect();
    let faces: BTreeSet<_> =
        e.flags().iter().filter(|f| f.flag.kind == DetectorKind::Pollution).filter_map(|f| f.flag.face).collect();
    let on_bots = faces.iter().filter(|f| bots.contains(f)).count();
    (on_bots, faces.len() - on_bots)
}

/// Unique-name junk halves the legitimate hit rate; admitting only names seen
/// twice restores it, and the detector points at the bots.
fn c9() -> Outcome {
    let mut detector = toml::Table::new();
    detector.insert("window_ms".into(), 5000.into());
    detector.insert("interval_ms".into(), 1000.into());
    detector.insert("pollution".into(), toml::Value::Table(Default::default()));
    let det = toml::Value::Table(detector);
    let quiet = {
        let mut c = tweak(POLLUTION, &[("routers.edge.detectors", det.clone())]);
        c.attacks.clear();
        c
    };
    let attacked = tweak(POLLUTION, &[("routers.edge.detectors", det)]);
    let popular = tweak(POLLUTION, &[("routers.edge.cache.policy", "popularity".into())]);
    let (mut h0, mut h1, mut h2) = (Vec::new(), Vec::new(), Vec::new());
    let (mut bot_flags, mut other_flags, mut quiet_flags) = (0, 0, 0);
    for seed in 1..=3 {
        let e = run(&quiet, seed);
        h0.push(legit_hit_rate(&e));
        quiet_flags += e.flags().len();
        let e = run(&attacked, seed);
        h1.push(legit_hit_rate(&e));
        let (b, o) = pollution_flags(&e);
        if b == 0 {
            return Err(format!("seed {seed}: no bot face flagged"));
        }
        bot_flags += b;
        other_flags += o;
        h2.push(legit_hit_rate(&run(&popular, seed)));
    }
    let (base, hurt, fixed) = (mean(&h0), mean(&h1), mean(&h2));
    check(
        hurt <= 0.5 * base && fixed >= 0.9 * base && quiet_flags == 0 && other_flags == 0,
        format!(
            "legit hit rate {base:.3} -> {hurt:.3} under pollution, {fixed:.3} with popularity admission; \
             bot faces flagged {bot_flags}, user faces {other_flags}, attack-free flags {quiet_flags}"
        ),
    )
}

// ---------------------------------------------------------------- 10

/// Verifying routers never pass poisoned content on; without them consumers
/// reject all of it. Verification costs router time.
fn c10() -> Outcome {
    let text = corpus::get("poisoning").unwrap();
    let on = config(text);
    let off = tweak(text, &[("routers.edge.verify_signatures", false.into())]);
    let e_on = run(&on, 1);
    let e_off = run(&off, 1);
    let edge_on = id(&e_on, "edge");
    let poisoned_cached = e_on.router(edge_on).unwrap().cs().names().filter(|x| n("/bank").is_prefix_of(x)).count();
    let (served_on, ok_on) = (metric(&e_on, "client", "rejected"), metric(&e_on, "client", "satisfied"));
    let substituted = metric(&e_on, "core", "poisoned");
    let (rejected_off, ok_off) = (metric(&e_off, "client", "rejected"), metric(&e_off, "client", "satisfied"));
    let (cost_on, cost_off) = (metric(&e_on, "edge", "processing_mean_us"), metric(&e_off, "edge", "processing_mean_us"));
    check(
        served_on == 0.0 && ok_on == 0.0 && poisoned_cached == 0 && rejected_off > 0.0 && ok_off == 0.0 && cost_on > cost_off,
        format!(
            "verifying edge: 0 of {substituted} poisoned objects delivered, {poisoned_cached} cached; \
             non-verifying: consumer rejected {rejected_off}/{}; processing {cost_on:.0} vs {cost_off:.0} us",
            rejected_off + ok_off
        ),
    )
}

// ---------------------------------------------------------------- 11

/// alice -1- r1 -5- r2 -5- cnn, relays ar1 on r1 and ar2 on r2.
fn overlay_net(seed: u64, overlay: bool, requests: usize) -> (Engine, NodeId, NodeId, Vec<RelayInfo>) {
    let mut e = Engine::new(seed);
    let r1 = e.add_router("r1", RouterConfig::default()).unwrap();
    let r2 = e.add_router("r2", RouterConfig::default()).unwrap();
    e.link(r1, r2, ms(5)).unwrap();
    let cnn = e.add_producer("cnn", ProducerConfig::new(n("/cnn"))).unwrap();
    e.link(r2, cnn, ms(5)).unwrap();
    let ar1 = add_relay(&mut e, "ar1", n("/ar/one"), SimDuration::ZERO).unwrap();
    let ar2 = add_relay(&mut e, "ar2", n("/ar/two"), SimDuration::ZERO).unwrap();
    e.link(ar1.node, r1, ms(5)).unwrap();
    e.link(ar2.node, r2, ms(5)).unwrap();
    let dir = vec![ar1, ar2];
    let times: Vec<SimTime> = (0..requests).map(|i| at_ms(100 + 200 * i as u64)).collect();
    let name = n("/cnn/news/today");
    let alice = if overlay {
        let reqs = times.iter().map(|t| (*t, name.clone())).collect();
        e.add_endpoint("alice", Box::new(OverlayConsumer::new(dir.clone(), reqs))).unwrap()
    } else {
        let mut w = Workload::new(RequestProcess::Schedule(times), NameDist::Fixed(name));
        w.max_requests = Some(requests as u64);
        e.add_endpoint("alice", Box::new(Consumer::new(w))).unwrap()
    };
    e.link(alice, r1, ms(1)).unwrap();
    e.auto_route();
    e.enable_trace(true);
    e.run_until(SimTime::from_secs(5)).unwrap();
    (e, alice, cnn, dir)
}

/// Circuits deliver the right signed bytes, hide the consumer past the entry
/// relay and defeat caching.
fn c11() -> Outcome {
    let mut records = 0;
    for seed in 1..=100 {
        let (mut e, alice, cnn, dir) = overlay_net(seed, true, 1);
        let fetched = e.agent::<OverlayConsumer>(alice).unwrap().fetched.clone();
        let direct = e.produce(cnn, &n("/cnn/news/today")).unwrap();
        if fetched.len() != 1
            || fetched[0].object.payload != direct.payload
            || fetched[0].object.name != direct.name
            || fetched[0].verification != Verification::Valid
        {
            return Err(format!("seed {seed}: overlay fetch differs from direct fetch"));
        }
        let r1 = id(&e, "r1");
        let alice_face = format!("r1:{}", e.face_toward(r1, alice).unwrap());
        let exit_side = [e.node_name(dir[1].node).to_string(), "r2".into(), "cnn".into()];
        for rec in e.trace().unwrap().records().filter(|r| exit_side.contains(&r.node)) {
            records += 1;
            for field in [&rec.node, &rec.kind, &rec.name, &rec.face, &rec.outcome] {
                if field.contains("alice") || field.contains(&alice_face) {
                    return Err(format!("seed {seed}: consumer identifier at exit side: {rec:?}"));
                }
            }
        }
    }
    let (d, dc, _, _) = overlay_net(4, false, 5);
    let (o, oc, _, dir) = overlay_net(4, true, 5);
    let report = measure_overhead(&d, dc, &n("/cnn"), &o, oc, &dir).unwrap();
    check(
        report.wrapped_hit_rate == 0.0 && report.direct_hit_rate > 0.0 && records > 0,
        format!(
            "100/100 fetches match and verify; {records} exit-side records, no consumer identifiers; \
             hit rate wrapped {:.2} vs direct {:.2}",
            report.wrapped_hit_rate, report.direct_hit_rate
        ),
    )
}

// ---------------------------------------------------------------- 12

/// Same scenario and seed, byte-identical outputs.
fn c12() -> Outcome {
    let opts = RunOptions { seed: Some(11), trace: true, ..Default::default() };
    for id in corpus::ids() {
        let cfg = config(corpus::get(id).unwrap());
        let a = run_config(&cfg, id, &opts).unwrap();
        let b = run_config(&cfg, id, &opts).unwrap();
        let (ma, mb) = (csv_bytes(METRICS_HEADER, &a.metrics).unwrap(), csv_bytes(METRICS_HEADER, &b.metrics).unwrap());
        if ma != mb || a.trace != b.trace || a.trace.as_ref().is_none_or(|t| t.is_empty()) {
            return Err(format!("{id}: outputs differ between identical runs"));
        }
    }
    Ok(format!("{} bundled scenarios reproduce metrics and trace byte for byte", corpus::ids().count()))
}

fn main() -> ExitCode {
    let criteria: [(u32, fn() -> Outcome); 12] =
        [(1, c1), (2, c2), (3, c3), (4, c4), (5, c5), (6, c6), (7, c7), (8, c8), (9, c9), (10, c10), (11, c11), (12, c12)];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (k, f) in criteria {
        let outcome = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        match outcome {
            Ok(d) => println!("PASS criterion {k}: {d}"),
            Err(d) => {
                failed += 1;
                println!("FAIL criterion {k}: {d}");
            }
        }
    }
    println!("{} of 12 criteria passed", 12 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
