//! Timing side channels: hit/miss calibration, characteristic-time
//! estimation and the probe loops that watch a target name.

use std::any::Any;

use rand::Rng;

use crate::attacks::{attach, drive, AttackError, AttackVariant, ACCESS_DELAY};
use crate::dist::mean_and_cv;
use crate::engine::{Agent, AgentCtx, AttackResult, Engine, NodeId, Reply};
use crate::names::Name;
use crate::packet::segment_component;
use crate::time::{SimDuration, SimTime};

/// Hit/miss RTT threshold learned from labelled samples.
#[derive(Clone, Debug, PartialEq)]
pub struct RttCalibration {
    pub hit_mean_ms: f64,
    pub miss_mean_ms: f64,
    pub threshold_ms: f64,
    /// Every hit sample was faster than every miss sample.
    pub reliable: bool,
    /// Half the gap between the slowest hit and the fastest miss (negative on overlap).
    pub margin_ms: f64,
}

impl RttCalibration {
    pub fn from_samples(hits_ms: &[f64], misses_ms: &[f64]) -> Result<Self, AttackError> {
        if hits_ms.is_empty() || misses_ms.is_empty() {
            return Err(AttackError::NoSamples);
        }
        let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
        let (hit_mean_ms, miss_mean_ms) = (mean(hits_ms), mean(misses_ms));
        let slowest_hit = hits_ms.iter().copied().fold(f64::MIN, f64::max);
        let fastest_miss = misses_ms.iter().copied().fold(f64::MAX, f64::min);
        Ok(RttCalibration {
            hit_mean_ms,
            miss_mean_ms,
            threshold_ms: (hit_mean_ms + miss_mean_ms) / 2.0,
            reliable: slowest_hit < fastest_miss,
            margin_ms: (fastest_miss - slowest_hit) / 2.0,
        })
    }

    pub fn is_hit(&self, rtt: SimDuration) -> bool {
        rtt.as_millis_f64() < self.threshold_ms
    }
}

const WARM: u64 = 0;
const HIT: u64 = 1;
const MISS: u64 = 2;

/// Collects `n` RTTs of a cached name and `n` of fresh names under a prefix.
pub struct Calibrator {
    cached: Name,
    uncached: Name,
    n: usize,
    pub hits_ms: Vec<f64>,
    pub misses_ms: Vec<f64>,
    sent_hits: usize,
    sent_misses: usize,
    done: bool,
}

impl Calibrator {
    pub fn new(cached: Name, uncached: Name, n: usize) -> Self {
        Calibrator { cached, uncached, n, hits_ms: Vec::new(), misses_ms: Vec::new(), sent_hits: 0, sent_misses: 0, done: false }
    }

    pub fn calibration(&self) -> Result<RttCalibration, AttackError> {
        RttCalibration::from_samples(&self.hits_ms, &self.misses_ms)
    }

    fn next(&mut self, ctx: &mut AgentCtx<'_>) {
        if self.sent_hits < self.n {
            self.sent_hits += 1;
            ctx.fetch(self.cached.clone(), HIT);
        } else if self.sent_misses < self.n {
            self.sent_misses += 1;
            ctx.fetch(self.uncached.join(format!("cal-{}-{}", ctx.node, self.sent_misses)), MISS);
        } else {
            self.done = true;
        }
    }
}

impl Agent for Calibrator {
    fn start(&mut self, ctx: &mut AgentCtx<'_>) {
        if self.n == 0 {
            self.done = true;
            return;
        }
        ctx.fetch(self.cached.clone(), WARM);
    }

    fn on_reply(&mut self, reply: &Reply, ctx: &mut AgentCtx<'_>) {
        match reply.tag {
            HIT => self.hits_ms.push(reply.rtt.as_millis_f64()),
            MISS => self.misses_ms.push(reply.rtt.as_millis_f64()),
            _ => {}
        }
        self.next(ctx);
    }

    fn on_timeout(&mut self, _name: &Name, _tag: u64, ctx: &mut AgentCtx<'_>) {
        self.next(ctx);
    }

    fn is_done(&self) -> bool {
        self.done
    }

    fn as_any(&self) -> &dyn Any {
        self
    }

    fn as_any_mut(&mut self) -> &mut dyn Any {
        self
    }
}

/// Learns the hit/miss threshold at `edge`. `uncached` is a prefix whose
/// fresh children are served by some producer.
pub fn calibrate_rtt(
    engine: &mut Engine,
    edge: NodeId,
    cached: &Name,
    uncached: &Name,
    n: usize,
) -> Result<RttCalibration, AttackError> {
    if n == 0 {
        return Err(AttackError::NoSamples);
    }
    let id = attach(engine, edge, "calibrator", ACCESS_DELAY, Box::new(Calibrator::new(cached.clone(), uncached.clone(), n)))?;
    drive(engine, SimDuration::from_secs(3600))?;
    engine.agent::<Calibrator>(id).expect("attached above").calibration()
}

#[derive(Clone, Debug, PartialEq)]
pub struct TcEstimatorConfig {
    /// Fresh probe names are minted under this prefix.
    pub prefix: Name,
    pub initial_gap: SimDuration,
    /// Stop bisecting once the bracket is this narrow relative to its top.
    pub precision: f64,
    /// Give up (no eviction observed) beyond this gap.
    pub max_gap: SimDuration,
    pub repetitions: u32,
    /// Estimates spread wider than this are reported as high variance.
    pub cv_max: f64,
}

impl TcEstimatorConfig {
    pub fn new(prefix: Name) -> Self {
        TcEstimatorConfig {
            prefix,
            initial_gap: SimDuration::from_millis(10),
            precision: 0.02,
            max_gap: SimDuration::from_secs(120),
            repetitions: 3,
            cv_max: 0.10,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TcEstimate {
    pub estimates_ms: Vec<f64>,
    pub mean_ms: Option<f64>,
    pub cv: Option<f64>,
    pub high_variance: bool,
    /// Nothing was ever evicted within the largest gap tried.
    pub unbounded: bool,
    pub trials: u64,
}

impl TcEstimate {
    /// The estimate, unless repetitions disagreed or no bound was found.
    pub fn point(&self) -> Option<SimDuration> {
        if self.high_variance || self.unbounded {
            return None;
        }
        self.mean_ms.map(SimDuration::from_millis_f64)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum TcPhase {
    CalibrateMiss,
    CalibrateHit,
    Insert,
    Wait,
    Probe,
}

/// Measures how long a freshly cached object survives at the edge.
///
/// Each trial fetches a never-seen name, waits `gap` and asks again; a hit
/// means the residency exceeds `gap` plus one edge round trip. Gaps grow
/// geometrically until a miss, then the bracket is bisected.
pub struct TcEstimator {
    cfg: TcEstimatorConfig,
    phase: TcPhase,
    serial: u64,
    current: Name,
    miss_rtt_ms: f64,
    hit_rtt_ms: f64,
    lo: SimDuration,
    hi: Option<SimDuration>,
    gap: SimDuration,
    pub result: TcEstimate,
    done: bool,
}

impl TcEstimator {
    pub fn new(cfg: TcEstimatorConfig) -> Self {
        let gap = cfg.initial_gap;
        TcEstimator {
            cfg,
            phase: TcPhase::CalibrateMiss,
            serial: 0,
            current: Name::root(),
            miss_rtt_ms: 0.0,
            hit_rtt_ms: 0.0,
            lo: SimDuration::ZERO,
            hi: None,
            gap,
            result: TcEstimate::default(),
            done: false,
        }
    }

    fn fresh(&mut self, ctx: &mut AgentCtx<'_>) {
        self.serial += 1;
        self.current = self.cfg.prefix.join(format!("tc-{}-{}", ctx.node, self.serial));
        ctx.fetch(self.current.clone(), 0);
    }

    fn begin_trial(&mut self, ctx: &mut AgentCtx<'_>) {
        self.phase = TcPhase::Insert;
        self.result.trials += 1;
        self.fresh(ctx);
    }

    fn threshold_ms(&self) -> f64 {
        (self.hit_rtt_ms + self.miss_rtt_ms) / 2.0
    }

    fn finish_repetition(&mut self, estimate: Option<f64>, ctx: &mut AgentCtx<'_>) {
        match estimate {
            Some(ms) => self.result.estimates_ms.push(ms),
            None => self.result.unbounded = true,
        }
        let reps = self.result.estimates_ms.len() as u32 + u32::from(self.result.unbounded);
        if self.result.unbounded || reps >= self.cfg.repetitions.max(1) {
            self.summarize();
            self.done = true;
            return;
        }
        self.restart(ctx);
    }

    /// New repetition. The first gap is dithered within one doubling so
    /// repetitions do not all probe the same grid.
    fn restart(&mut self, ctx: &mut AgentCtx<'_>) {
        self.lo = SimDuration::ZERO;
        self.hi = None;
        self.gap = self.cfg.initial_gap.mul_f64(1.0 + ctx.rng.random::<f64>());
        self.begin_trial(ctx);
    }

    fn summarize(&mut self) {
        let xs = &self.result.estimates_ms;
        if xs.is_empty() {
            return;
        }
        self.result.mean_ms = Some(xs.iter().sum::<f64>() / xs.len() as f64);
        self.result.cv = mean_and_cv(xs).map(|(_, cv)| cv);
        self.result.high_variance = self.result.cv.is_some_and(|cv| cv > self.cfg.cv_max);
    }

    fn observe(&mut self, hit: bool, ctx: &mut AgentCtx<'_>) {
        if hit {
            self.lo = self.gap;
        } else {
            self.hi = Some(self.gap);
        }
        match self.hi {
            None => {
                let next = self.gap + self.gap;
                if next > self.cfg.max_gap {
                    self.finish_repetition(None, ctx);
                    return;
                }
                self.gap = next;
            }
            Some(hi) => {
                let width = (hi.as_micros() - self.lo.as_micros().min(hi.as_micros())) as f64;
                if width <= self.cfg.precision * hi.as_micros() as f64 || width < 2.0 {
                    // Residency measured at the router: the wait plus one edge round trip.
                    let mid = (self.lo.as_millis_f64() + hi.as_millis_f64()) / 2.0;
                    self.finish_repetition(Some(mid + self.hit_rtt_ms), ctx);
                    return;
                }
                self.gap = SimDuration::from_micros((self.lo.as_micros() + hi.as_micros()) / 2);
            }
        }
        self.begin_trial(ctx);
    }
}

impl Agent for TcEstimator {
    fn start(&mut self, ctx: &mut AgentCtx<'_>) {
        self.phase = TcPhase::CalibrateMiss;
        self.fresh(ctx);
    }

    fn on_reply(&mut self, reply: &Reply, ctx: &mut AgentCtx<'_>) {
        if self.done || reply.requested != self.current {
            return;
        }
        let rtt = reply.rtt.as_millis_f64();
        match self.phase {
            TcPhase::CalibrateMiss => {
                self.miss_rtt_ms = rtt;
                self.phase = TcPhase::CalibrateHit;
                ctx.fetch(self.current.clone(), 0);
            }
            TcPhase::CalibrateHit => {
                self.hit_rtt_ms = rtt;
                self.restart(ctx);
            }
            TcPhase::Insert => {
                self.phase = TcPhase::Wait;
                ctx.set_timer(self.gap, self.serial);
            }
            TcPhase::Probe => {
                let hit = rtt < self.threshold_ms();
                self.observe(hit, ctx);
            }
            TcPhase::Wait => {}
        }
    }

    fn on_timer(&mut self, token: u64, ctx: &mut AgentCtx<'_>) {
        if self.phase == TcPhase::Wait && token == self.serial {
            self.phase = TcPhase::Probe;
            ctx.fetch(self.current.clone(), 0);
        }
    }

    fn on_timeout(&mut self, name: &Name, _tag: u64, ctx: &mut AgentCtx<'_>) {
        if self.done || *name != self.current {
            return;
        }
        match self.phase {
            TcPhase::Probe => self.observe(false, ctx),
            // Could not even fetch the probe object: start over with a new name.
            TcPhase::CalibrateMiss | TcPhase::CalibrateHit => self.start(ctx),
            TcPhase::Insert => {
                self.result.trials -= 1;
                self.begin_trial(ctx);
            }
            TcPhase::Wait => {}
        }
    }

    fn is_done(&self) -> bool {
        self.done
    }

    fn report(&self) -> Vec<(String, f64)> {
        let mut rows = vec![("tc_trials".to_string(), self.result.trials as f64)];
        if let Some(m) = self.result.mean_ms {
            rows.push(("tc_estimate_ms".to_string(), m));
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

/// Estimates the edge router's characteristic time from a fresh endpoint.
pub fn estimate_characteristic_time(
    engine: &mut Engine,
    edge: NodeId,
    cfg: TcEstimatorConfig,
) -> Result<TcEstimate, AttackError> {
    let id = attach(engine, edge, "tc-estimator", ACCESS_DELAY, Box::new(TcEstimator::new(cfg)))?;
    drive(engine, SimDuration::from_secs(24 * 3600))?;
    Ok(engine.agent::<TcEstimator>(id).expect("attached above").result.clone())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProbeMode {
    Sequential,
    /// Probe chunks `0..chunks` of the target, staggered over one period.
    Parallel { chunks: u32 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct TimingProbeState {
    pub t_c: SimDuration,
    /// Slack added to the period so the prober's own copy is gone by the next probe.
    pub epsilon: SimDuration,
    pub calibration: RttCalibration,
    pub start: SimTime,
    pub until: SimTime,
    pub timeout: SimDuration,
}

impl TimingProbeState {
    pub fn period(&self) -> SimDuration {
        self.t_c + self.epsilon
    }
}

/// "Someone fetched chunk `chunk` between `from` (exclusive) and `to`."
#[derive(Clone, Debug, PartialEq)]
pub struct Detection {
    pub chunk: u32,
    pub from: SimTime,
    pub to: SimTime,
    pub confidence: f64,
}

impl Detection {
    pub fn contains(&self, t: SimTime) -> bool {
        self.from < t && t <= self.to
    }
}

const CHECK_TAG: u64 = u64::MAX;

/// Periodically probes a target and reports the intervals in which somebody
/// else must have requested it.
#[derive(Clone, Debug)]
pub struct TimingProber {
    target: Name,
    mode: ProbeMode,
    state: TimingProbeState,
    check: Option<Name>,
    chunks: u32,
    sends: Vec<Vec<SimTime>>,
    outstanding: u64,
    stopped: u32,
    started: bool,
    pub blocked: bool,
    pub probes: u64,
    pub detections: Vec<Detection>,
}

impl TimingProber {
    /// Sequential mode probes `target` itself; parallel mode probes
    /// `target/seg=j`. `check` is a non-first chunk of some uncached object,
    /// requested once to see whether out-of-order chunk requests get through.
    pub fn new(target: Name, mode: ProbeMode, state: TimingProbeState, check: Option<Name>) -> Self {
        TimingProber {
            target,
            mode,
            state,
            check,
            chunks: 0,
            sends: Vec::new(),
            outstanding: 0,
            stopped: 0,
            started: false,
            blocked: false,
            probes: 0,
            detections: Vec::new(),
        }
    }

    fn probe_name(&self, chunk: u32) -> Name {
        match self.mode {
            ProbeMode::Sequential => self.target.clone(),
            ProbeMode::Parallel { .. } => self.target.join(segment_component(chunk)),
        }
    }

    fn begin(&mut self, ctx: &mut AgentCtx<'_>, chunks: u32) {
        self.started = true;
        self.chunks = chunks.max(1);
        self.sends = vec![Vec::new(); self.chunks as usize];
        let period = self.state.period().as_micros();
        let first = self.state.start.max(ctx.now);
        for j in 0..self.chunks {
            let offset = SimDuration::from_micros(period * u64::from(j) / u64::from(self.chunks));
            ctx.set_timer((first + offset).since(ctx.now), u64::from(j));
        }
    }

    fn parallel_chunks(&self) -> u32 {
        match self.mode {
            ProbeMode::Sequential => 1,
            ProbeMode::Parallel { chunks } => chunks.max(1),
        }
    }
}

impl Agent for TimingProber {
    fn start(&mut self, ctx: &mut AgentCtx<'_>) {
        let n = self.parallel_chunks();
        match (&self.check, n > 1) {
            (Some(check), true) => {
                self.outstanding += 1;
                ctx.request(crate::packet::Interest::new(check.clone(), 0), self.state.timeout, CHECK_TAG);
            }
            _ => self.begin(ctx, n),
        }
    }

    fn on_timer(&mut self, token: u64, ctx: &mut AgentCtx<'_>) {
        let j = token as u32;
        if ctx.now > self.state.until {
            self.stopped += 1;
            return;
        }
        let k = self.sends[j as usize].len() as u64;
        self.sends[j as usize].push(ctx.now);
        self.probes += 1;
        self.outstanding += 1;
        ctx.request(crate::packet::Interest::new(self.probe_name(j), 0), self.state.timeout, (u64::from(j) << 32) | k);
        ctx.set_timer(self.state.period(), token);
    }

    fn on_reply(&mut self, reply: &Reply, ctx: &mut AgentCtx<'_>) {
        self.outstanding -= 1;
        if reply.tag == CHECK_TAG {
            self.begin(ctx, self.parallel_chunks());
            return;
        }
        if !self.state.calibration.is_hit(reply.rtt) {
            return;
        }
        let (j, k) = ((reply.tag >> 32) as u32, (reply.tag & 0xffff_ffff) as usize);
        let sends = &self.sends[j as usize];
        let to = sends[k];
        let from = if k == 0 { to.saturating_sub(self.state.period()) } else { sends[k - 1] };
        self.detections.push(Detection { chunk: j, from, to, confidence: self.state.calibration.margin_ms });
    }

    fn on_timeout(&mut self, _name: &Name, tag: u64, ctx: &mut AgentCtx<'_>) {
        self.outstanding -= 1;
        if tag == CHECK_TAG {
            // Out-of-order chunk requests are refused: watch the first chunk only.
            self.blocked = true;
            self.begin(ctx, 1);
        }
    }

    fn is_done(&self) -> bool {
        self.started && self.stopped >= self.chunks && self.outstanding == 0
    }

    fn report(&self) -> Vec<(String, f64)> {
        vec![
            ("probes".to_string(), self.probes as f64),
            ("detections".to_string(), self.detections.len() as f64),
        ]
    }

    fn attack_result(&self) -> Option<AttackResult> {
        let variant = match self.mode {
            ProbeMode::Sequential => AttackVariant::TimingSequential,
            ProbeMode::Parallel { .. } => AttackVariant::TimingParallel,
        };
        Some(AttackResult {
            variant: variant.as_str().to_string(),
            params: format!(
                "target={};chunks={};t_c_ms={};epsilon_ms={}",
                self.target,
                self.parallel_chunks(),
                self.state.t_c.as_millis_f64(),
                self.state.epsilon.as_millis_f64()
            ),
            metric: "detections".to_string(),
            value: self.detections.len() as f64,
            aux: vec![
                ("probes".to_string(), self.probes.to_string()),
                ("blocked".to_string(), self.blocked.to_string()),
                ("threshold_ms".to_string(), format!("{:.3}", self.state.calibration.threshold_ms)),
            ],
        })
    }

    fn as_any(&self) -> &dyn Any {
        self
    }

    fn as_any_mut(&mut self) -> &mut dyn Any {
        self
    }
}

fn run_prober(engine: &mut Engine, edge: NodeId, prober: TimingProber) -> Result<TimingProber, AttackError> {
    let slack = prober.state.until.since(engine.now()) + prober.state.timeout + SimDuration::from_secs(60);
    let id = attach(engine, edge, "prober", ACCESS_DELAY, Box::new(prober))?;
    drive(engine, slack)?;
    Ok(engine.agent::<TimingProber>(id).expect("attached above").clone())
}

/// Probes `target` once per period until `state.until`.
pub fn timing_probe_loop(
    engine: &mut Engine,
    edge: NodeId,
    target: &Name,
    state: TimingProbeState,
) -> Result<Vec<Detection>, AttackError> {
    let prober = TimingProber::new(target.clone(), ProbeMode::Sequential, state, None);
    Ok(run_prober(engine, edge, prober)?.detections)
}

/// Probes chunks `0..chunks` of `target` staggered by period/chunks. Returns
/// the detections and whether chunk probing was blocked (sequential fallback).
pub fn parallel_cache_probing(
    engine: &mut Engine,
    edge: NodeId,
    target: &Name,
    chunks: u32,
    check: Option<Name>,
    state: TimingProbeState,
) -> Result<(Vec<Detection>, bool), AttackError> {
    let prober = TimingProber::new(target.clone(), ProbeMode::Parallel { chunks }, state, check);
    let done = run_prober(engine, edge, prober)?;
    Ok((done.detections, done.blocked))
}

/// Repeatedly guesses hit or miss for objects whose status it knows, to
/// measure how well the RTT threshold separates them.
pub struct ClassifierProbe {
    prefix: Name,
    calibration_samples: usize,
    trials: usize,
    serial: u64,
    last: Option<Name>,
    truth_hit: bool,
    hits_ms: Vec<f64>,
    misses_ms: Vec<f64>,
    pub calibration: Option<RttCalibration>,
    pub classified: usize,
    pub correct: usize,
    done: bool,
}

impl ClassifierProbe {
    pub fn new(prefix: Name, calibration_samples: usize, trials: usize) -> Self {
        ClassifierProbe {
            prefix,
            calibration_samples,
            trials,
            serial: 0,
            last: None,
            truth_hit: false,
            hits_ms: Vec::new(),
            misses_ms: Vec::new(),
            calibration: None,
            classified: 0,
            correct: 0,
            done: false,
        }
    }

    pub fn accuracy(&self) -> Option<f64> {
        (self.classified > 0).then(|| self.correct as f64 / self.classified as f64)
    }

    fn send(&mut self, hit: bool, ctx: &mut AgentCtx<'_>) {
        self.truth_hit = hit;
        let name = match (&self.last, hit) {
            (Some(last), true) => last.clone(),
            _ => {
                self.serial += 1;
                let n = self.prefix.join(format!("cls-{}-{}", ctx.node, self.serial));
                self.last = Some(n.clone());
                n
            }
        };
        ctx.fetch(name, 0);
    }

    fn next(&mut self, ctx: &mut AgentCtx<'_>) {
        let cal_total = self.calibration_samples * 2;
        let taken = self.hits_ms.len() + self.misses_ms.len();
        if self.calibration.is_none() && taken < cal_total {
            // Alternate: fresh name (miss), then the same name again (hit).
            self.send(taken % 2 == 1, ctx);
            return;
        }
        if self.calibration.is_none() {
            match RttCalibration::from_samples(&self.hits_ms, &self.misses_ms) {
                Ok(c) => self.calibration = Some(c),
                Err(_) => {
                    self.done = true;
                    return;
                }
            }
        }
        if self.classified >= self.trials {
            self.done = true;
            return;
        }
        let hit = self.last.is_some() && ctx.rng.random_bool(0.5);
        self.send(hit, ctx);
    }
}

impl Agent for ClassifierProbe {
    fn start(&mut self, ctx: &mut AgentCtx<'_>) {
        self.next(ctx);
    }

    fn on_reply(&mut self, reply: &Reply, ctx: &mut AgentCtx<'_>) {
        match &self.calibration {
            None if self.truth_hit => self.hits_ms.push(reply.rtt.as_millis_f64()),
            None => self.misses_ms.push(reply.rtt.as_millis_f64()),
            Some(cal) => {
                self.classified += 1;
                if cal.is_hit(reply.rtt) == self.truth_hit {
                    self.correct += 1;
                }
            }
        }
        self.next(ctx);
    }

    fn on_timeout(&mut self, _name: &Name, _tag: u64, ctx: &mut AgentCtx<'_>) {
        self.last = None;
        self.next(ctx);
    }

    fn is_done(&self) -> bool {
        self.done
    }

    fn report(&self) -> Vec<(String, f64)> {
        let mut rows = vec![("classified".to_string(), self.classified as f64)];
        if let Some(a) = self.accuracy() {
            rows.push(("classifier_accuracy".to_string(), a));
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
