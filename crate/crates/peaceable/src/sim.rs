//! Scenario description and the discrete-event run loop.

use crate::adversary::{Adversary, Emission, Strategy, View};
use crate::bunny::BunnyInit;
use crate::engine::{CancelGroup, EngineError, EventQueue};
use crate::network::{byzantine_emit, distribute, Delivery, MarkValue, NetError, Wire};
use crate::node::{Action, Effects, Level, Node, Step};
use crate::params::{validate, ParamSet, Rational};
use crate::time::{ClockModel, DriftSchedule, LocalTime, RefTime, Ring, TimeScale};
use crate::trace::{EventKind, EventRecord, Payload, Trace, TraceMeta};
use num_traits::Zero;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::HashSet;
use thiserror::Error;

/// Starting state of the nonfaulty nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitMode {
    /// Random counters, schedules, timers, trail contents, pending steps and in-flight messages.
    Arbitrary,
    /// Empty trails, equal clocks and a common next pulse.
    Clean,
    /// Fixed hostile preset: pulse schedules spread evenly over one period,
    /// disagreeing counters, engaging-looking trails, an engagement in
    /// progress and every emergency timer closed.
    Worst,
}

/// How each clock's rate is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DriftMode {
    Ideal,
    /// A random constant rate per node in `[1, rate bound]`.
    Constant,
    /// Rate oscillating with a random phase per node.
    Sinusoidal,
    /// Half the nodes at rate 1, the rest at the rate bound.
    Extremes,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub params: ParamSet,
    pub seed: u64,
    pub faulty: Vec<usize>,
    pub strategy: Strategy,
    pub init: InitMode,
    pub drift: DriftMode,
    /// Horizon in ticks; defaults to [`ParamSet::horizon_default`].
    pub horizon_ticks: Option<u64>,
    pub scale: Option<TimeScale>,
    pub modulus: Option<u64>,
    /// Record every clock tick as a `C` event.
    pub record_ticks: bool,
}

impl Scenario {
    pub fn new(params: ParamSet, seed: u64) -> Self {
        Self {
            params,
            seed,
            faulty: Vec::new(),
            strategy: Strategy::Benign,
            init: InitMode::Arbitrary,
            drift: DriftMode::Ideal,
            horizon_ticks: None,
            scale: None,
            modulus: None,
            record_ticks: false,
        }
    }

    pub fn scale(&self) -> TimeScale {
        self.scale.unwrap_or(if self.params.drift.is_zero() { TimeScale::DEFAULT } else { TimeScale::FINE })
    }

    pub fn ring(&self) -> Ring {
        Ring::new(self.modulus.unwrap_or_else(|| self.params.default_clock_modulus()))
    }

    pub fn horizon(&self) -> RefTime {
        let ticks = self.horizon_ticks.unwrap_or_else(|| ParamSet::wait_ticks(&self.params.horizon_default()));
        self.scale().ticks(ticks)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let p = &self.params;
        if p.n <= 3 * p.f {
            return Err(SimError::TooManyFaults { n: p.n, f: p.f });
        }
        if self.faulty.len() > p.f {
            return Err(SimError::FaultySetTooLarge { size: self.faulty.len(), f: p.f });
        }
        if let Some(&z) = self.faulty.iter().find(|z| **z >= p.n) {
            return Err(SimError::UnknownNode(z));
        }
        if let Some(e) = validate(p).into_iter().find(|e| e.gating && !e.pass) {
            return Err(SimError::InvalidParams(e.name.to_string()));
        }
        if self.scale().ceil(&p.delay).0 == 0 {
            return Err(SimError::ZeroDelay);
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SimError {
    #[error("n={n} does not exceed 3f={}", 3 * f)]
    TooManyFaults { n: usize, f: usize },
    #[error("{size} faulty nodes exceed f={f}")]
    FaultySetTooLarge { size: usize, f: usize },
    #[error("node {0} out of range")]
    UnknownNode(usize),
    #[error("parameter constraint `{0}` fails")]
    InvalidParams(String),
    #[error("message delay bound rounds to zero grid units")]
    ZeroDelay,
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Net(#[from] NetError),
}

#[derive(Debug, Clone)]
enum Ev {
    Tick,
    Step(Step),
    Deliver { from: usize, wire: Wire },
    Wake,
}

const RANK_TICK: u8 = 0;
const RANK_STEP: u8 = 1;
const RANK_DELIVER: u8 = 2;
const RANK_WAKE: u8 = 3;

fn tag(level: Level) -> u64 {
    match level {
        Level::Absorb => 0,
        Level::Engage => 1,
        Level::Agreement(g) => 2 + g as u64,
    }
}

struct World {
    scn: Scenario,
    scale: TimeScale,
    bound: u64,
    horizon: RefTime,
    queue: EventQueue<Ev>,
    nodes: Vec<Node>,
    clocks: Vec<ClockModel>,
    ticks: Vec<u64>,
    honest: Vec<usize>,
    adversary: Adversary,
    rng: ChaCha8Rng,
    events: Vec<EventRecord>,
    sent_by_faulty: HashSet<(usize, usize, u8, u64)>,
    engage_window: u64,
}

/// Runs a scenario to its horizon and returns the canonical trace.
pub fn run(scn: &Scenario) -> Result<Trace, SimError> {
    scn.validate()?;
    let mut w = World::new(scn.clone());
    w.start()?;
    while let Some(t) = w.queue.peek_time() {
        if t > w.horizon {
            break;
        }
        let fired = w.queue.pop().expect("peeked");
        w.fire(fired.node, fired.payload)?;
    }
    let p = &w.scn.params;
    let mut trace = Trace {
        meta: TraceMeta {
            n: p.n,
            f: p.f,
            seed: w.scn.seed,
            params_digest: p.digest(),
            faulty: w.scn.faulty.clone(),
            scale: w.scale.units(),
            modulus: w.scn.ring().modulus(),
            horizon: w.horizon,
        },
        events: w.events,
    };
    trace.canonicalize();
    Ok(trace)
}

impl World {
    fn new(scn: Scenario) -> Self {
        let p = scn.params.clone();
        let scale = scn.scale();
        let ring = scn.ring();
        let mut rng = ChaCha8Rng::seed_from_u64(scn.seed);
        let unit = scale.units();
        let clocks = (0..p.n)
            .map(|i| {
                let schedule = drift_schedule(scn.drift, i, &p, &mut rng);
                let offset = match scn.init {
                    InitMode::Arbitrary => LocalTime(rng.gen_range(0..ring.modulus())),
                    InitMode::Clean => LocalTime(0),
                    InitMode::Worst => LocalTime((i as u64 * ring.modulus()) / p.n as u64),
                };
                let first = match scn.init {
                    InitMode::Arbitrary => RefTime(rng.gen_range(1..=unit)),
                    InitMode::Clean => RefTime(unit),
                    InitMode::Worst => RefTime(1 + (i as u64 * (unit - 1)) / p.n as u64),
                };
                ClockModel::new(i, offset, first, schedule, scale, p.rate_bound)
            })
            .collect::<Vec<_>>();
        let nodes = (0..p.n).map(|i| Node::new(i, &p, ring)).collect();
        let honest = (0..p.n).filter(|i| !scn.faulty.contains(i)).collect();
        let horizon = scn.horizon();
        let bound = scale.ceil(&p.delay).0;
        let engage_window = ParamSet::window_ticks(&p.engage_window);
        Self {
            adversary: Adversary::new(scn.strategy),
            scn,
            scale,
            bound,
            horizon,
            queue: EventQueue::new(),
            nodes,
            clocks,
            ticks: vec![0; p.n],
            honest,
            rng,
            events: Vec::new(),
            sent_by_faulty: HashSet::new(),
            engage_window,
        }
    }

    fn n(&self) -> usize {
        self.scn.params.n
    }

    fn is_faulty(&self, node: usize) -> bool {
        self.scn.faulty.contains(&node)
    }

    /// Whether `node` currently executes the protocol.
    fn active(&self, node: usize) -> bool {
        !self.is_faulty(node) || self.scn.strategy.runs_protocol(self.queue.now().0 / self.scale.units())
    }

    fn start(&mut self) -> Result<(), SimError> {
        let ring = self.scn.ring();
        for i in 0..self.n() {
            let offset = self.clocks[i].offset;
            match self.scn.init {
                InitMode::Arbitrary => self.scramble(i, ring)?,
                InitMode::Clean => self.settle_clean(i, offset),
                InitMode::Worst => self.settle_worst(i, ring)?,
            }
            let first = self.clocks[i].tick_time(0);
            self.queue.schedule(first, i, RANK_TICK, Ev::Tick, None)?;
        }
        if self.scn.init == InitMode::Arbitrary {
            for from in 0..self.n() {
                for to in 0..self.n() {
                    if self.rng.gen_bool(0.3) {
                        let wire = Wire::Mark(MarkValue::ALL[self.rng.gen_range(0..4)]);
                        let at = RefTime(self.rng.gen_range(0..self.bound));
                        self.queue.schedule(at, to, RANK_DELIVER, Ev::Deliver { from, wire }, None)?;
                    }
                }
            }
        }
        if !self.scn.faulty.is_empty() {
            self.queue.schedule(RefTime(0), usize::MAX, RANK_WAKE, Ev::Wake, None)?;
        }
        Ok(())
    }

    fn settle_clean(&mut self, i: usize, offset: LocalTime) {
        let cfg = self.nodes[i].bunny.cfg;
        let init =
            BunnyInit { now: offset.0, next_pulse: offset.0 + cfg.period, counter: 0, last_pulse: Some(offset.0) };
        self.nodes[i].bunny = crate::bunny::Bunny::with_state(i, cfg, init);
    }

    fn settle_worst(&mut self, i: usize, ring: Ring) -> Result<(), SimError> {
        let cfg = self.nodes[i].bunny.cfg;
        let n = self.scn.params.n;
        let now = self.clocks[i].offset.0;
        let init = BunnyInit {
            now,
            next_pulse: ring.add(LocalTime(now), 1 + (i as u64 * cfg.period) / n as u64).0,
            counter: (i as u32) % cfg.cycles.max(1),
            last_pulse: None,
        };
        let mut b = crate::bunny::Bunny::with_state(i, cfg, init);
        for src in 0..n {
            let age = (src as u64 * 3) % (cfg.thresholds.observation_window + 1);
            b.trail.record(MarkValue::GOOD_BEST, ring.back(LocalTime(now), age), src);
        }
        b.engaged = true;
        self.nodes[i].bunny = b;
        let h = &mut self.nodes[i].emergency;
        h.help_timer = h.cfg.initiator_timeout;
        h.relax_timer = h.cfg.relax_timeout;
        let at = self.clocks[i].tick_time(cfg.engage_wait.max(1) - 1);
        self.queue.schedule(
            at,
            i,
            RANK_STEP,
            Ev::Step(Step::EngageAdjust),
            Some(CancelGroup { node: i, tag: tag(Level::Engage) }),
        )?;
        Ok(())
    }

    fn scramble(&mut self, i: usize, ring: Ring) -> Result<(), SimError> {
        let m = ring.modulus();
        let rng = &mut self.rng;
        let cfg = self.nodes[i].bunny.cfg;
        let now = self.clocks[i].offset.0;
        let init = BunnyInit {
            now,
            next_pulse: rng.gen_range(0..m),
            counter: rng.gen_range(0..cfg.cycles.max(1)),
            last_pulse: rng.gen_bool(0.8).then(|| rng.gen_range(0..m)),
        };
        let mut b = crate::bunny::Bunny::with_state(i, cfg, init);
        for _ in 0..rng.gen_range(0..3 * self.scn.params.n) {
            let age = rng.gen_range(0..=cfg.thresholds.observation_window);
            let src = rng.gen_range(0..self.scn.params.n);
            b.trail.record(MarkValue::ALL[rng.gen_range(0..4)], ring.back(LocalTime(now), age), src);
        }
        let h = &mut self.nodes[i].emergency;
        h.help_timer = rng.gen_range(0..=h.cfg.initiator_timeout);
        h.relax_timer = rng.gen_range(0..=h.cfg.relax_timeout);
        self.nodes[i].bunny = b;
        let pending = [
            (Level::Absorb, Step::Absorb { pulse: ring.wrap(rng.gen_range(0..m)) }, cfg.absorb_wait),
            (Level::Engage, Step::EngageAdjust, cfg.engage_wait),
            (Level::Engage, Step::EngageSettle, cfg.settle_wait),
        ];
        let pick = rng.gen_range(0..=pending.len());
        if let Some(&(level, step, wait)) = pending.get(pick) {
            let ticks = rng.gen_range(1..=wait.max(1));
            if level == Level::Engage {
                self.nodes[i].bunny.engaged = true;
            }
            let at = self.clocks[i].tick_time(ticks - 1);
            self.queue.schedule(at, i, RANK_STEP, Ev::Step(step), Some(CancelGroup { node: i, tag: tag(level) }))?;
        }
        Ok(())
    }

    fn record(&mut self, node: usize, kind: EventKind, payload: Payload) {
        self.events.push(EventRecord { time: self.queue.now(), node, kind, payload });
    }

    fn fire(&mut self, node: usize, ev: Ev) -> Result<(), SimError> {
        let mut fx = Effects::default();
        match ev {
            Ev::Wake => {
                let view = self.view();
                let out = self.adversary.on_wake(&view, &mut self.rng);
                self.emit_faulty(out)?;
                let next = self.queue.now() + RefTime(self.scale.units());
                self.queue.schedule(next, usize::MAX, RANK_WAKE, Ev::Wake, None)?;
                return Ok(());
            }
            Ev::Tick => {
                self.ticks[node] += 1;
                let next = self.clocks[node].tick_time(self.ticks[node]);
                self.queue.schedule(next, node, RANK_TICK, Ev::Tick, None)?;
                if !self.active(node) {
                    return Ok(());
                }
                if self.scn.record_ticks {
                    let tick = self.scn.ring().add(self.nodes[node].bunny.now, 1);
                    self.record(node, EventKind::C, Payload::Tick(tick));
                }
                self.nodes[node].on_tick(&mut fx);
            }
            Ev::Step(step) => {
                if !self.active(node) {
                    return Ok(());
                }
                self.nodes[node].on_step(step, &mut fx);
            }
            Ev::Deliver { from, wire } => {
                if !self.active(node) {
                    return Ok(());
                }
                self.record(node, EventKind::R, Payload::Recv { from, wire });
                self.nodes[node].on_receive(from, wire, &mut fx);
            }
        }
        self.apply(node, fx.take())
    }

    fn apply(&mut self, node: usize, actions: Vec<Action>) -> Result<(), SimError> {
        for a in actions {
            match a {
                Action::Emit(kind, payload) => self.record(node, kind, payload),
                Action::Broadcast(wire) => {
                    self.record(node, EventKind::S, Payload::Send(wire));
                    let now = self.queue.now();
                    let view = self.view();
                    let mut delays = Vec::new();
                    for r in 0..self.n() {
                        let m = crate::network::Message { sender: node, receiver: r, sent: now, wire };
                        delays.push(self.adversary.delay(&view, &m, &mut self.rng));
                    }
                    let deliveries = distribute(node, wire, now, self.n(), self.bound, |m| delays[m.receiver]);
                    self.deliver(deliveries)?;
                    if !self.is_faulty(node) {
                        let out = self.adversary.on_distribute(&view, wire, &mut self.rng);
                        self.emit_faulty(out)?;
                    }
                }
                Action::Wait { ticks, level, step } => {
                    let done = self.ticks[node];
                    let at = if ticks == 0 {
                        self.queue.now()
                    } else {
                        self.clocks[node].tick_time((done + ticks).saturating_sub(1))
                    };
                    let group = CancelGroup { node, tag: tag(level) };
                    self.queue.schedule(at, node, RANK_STEP, Ev::Step(step), Some(group))?;
                }
                Action::Cancel(level) => self.queue.cancel_group(CancelGroup { node, tag: tag(level) }),
                Action::CancelAll => {
                    for t in 0..2 + self.n() as u64 {
                        self.queue.cancel_group(CancelGroup { node, tag: t });
                    }
                }
            }
        }
        Ok(())
    }

    fn deliver(&mut self, deliveries: Vec<Delivery>) -> Result<(), SimError> {
        let sent = self.queue.now();
        for d in deliveries {
            let m = d.message;
            let at = self.on_receiver_tick(m.receiver, sent, d.at);
            self.queue.schedule(at, m.receiver, RANK_DELIVER, Ev::Deliver { from: m.sender, wire: m.wire }, None)?;
        }
        Ok(())
    }

    /// Moves a delivery onto a tick of the receiver: the latest one in `[sent, at]`,
    /// or else the first one after `sent`. Cycles never exceed the delay bound, so
    /// the result stays below `sent + bound`.
    fn on_receiver_tick(&mut self, receiver: usize, sent: RefTime, at: RefTime) -> RefTime {
        let clock = &mut self.clocks[receiver];
        let upto = clock.ticks_until(at);
        if upto > 0 {
            let t = clock.tick_time(upto - 1);
            if t >= sent {
                return t;
            }
        }
        let before = if sent.0 == 0 { 0 } else { clock.ticks_until(RefTime(sent.0 - 1)) };
        clock.tick_time(before)
    }

    fn view(&self) -> View {
        View {
            now: self.queue.now(),
            n: self.n(),
            faulty: self.scn.faulty.clone(),
            honest: self.honest.clone(),
            bound: self.bound,
            ba_rounds: self.scn.params.ba_rounds,
            unit: self.scale.units(),
            engage_window: self.engage_window,
        }
    }

    /// Sends faulty emissions, keeping one message per (sender, receiver, kind) per tick.
    fn emit_faulty(&mut self, out: Vec<Emission>) -> Result<(), SimError> {
        let now = self.queue.now();
        let slot = now.0 / self.scale.units();
        for e in out {
            if !self.sent_by_faulty.insert((e.sender, e.receiver, e.wire.class(), slot)) {
                continue;
            }
            let ds = byzantine_emit(
                e.sender,
                &self.scn.faulty,
                now,
                self.n(),
                self.scn.params.ba_rounds,
                self.bound,
                &[(e.receiver, e.wire, e.delay)],
            )?;
            self.record(e.sender, EventKind::S, Payload::Send(e.wire));
            self.deliver(ds)?;
        }
        if self.sent_by_faulty.len() > 1 << 16 {
            self.sent_by_faulty.retain(|k| k.3 >= slot);
        }
        Ok(())
    }
}

fn drift_schedule(mode: DriftMode, node: usize, p: &ParamSet, rng: &mut ChaCha8Rng) -> DriftSchedule {
    let one = Rational::from_integer(1);
    let rho = p.rate_bound - one;
    match mode {
        DriftMode::Ideal => DriftSchedule::ideal(),
        DriftMode::Constant => {
            let k = rng.gen_range(0..=1000i128);
            DriftSchedule::Constant { rate: one + rho * Rational::new(k, 1000) }
        }
        DriftMode::Sinusoidal => DriftSchedule::Sinusoidal {
            amplitude: rho,
            period_ticks: rng.gen_range(50..500),
            phase_ticks: rng.gen_range(0..500),
        },
        DriftMode::Extremes => DriftSchedule::Constant { rate: if node.is_multiple_of(2) { one } else { p.rate_bound } },
    }
}
