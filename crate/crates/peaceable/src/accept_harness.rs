//! Randomized schedules for the acceptance protocol in isolation.
//!
//! Each schedule runs [`Acceptor`]s for one General on `n` nodes with random
//! clock phases, random delays below the bound and faulty nodes sending random
//! supports and confirms. The five properties are checked on the outcome.

use crate::accept::{AcceptConfig, Acceptor};
use crate::engine::EventQueue;
use crate::network::Wire;
use crate::node::{Action, Effects};
use crate::params::{ParamSet, Rational};
use crate::time::{ClockModel, DriftSchedule, LocalTime, RefTime, Ring, TimeScale};
use crate::trace::{EventKind, Payload};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Property under test.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Property {
    /// Nonfaulty General, all nonfaulty invoke on receipt: acceptance within 4d, lag at most 4ϑd.
    Correctness,
    /// More than `f` nonfaulty invocations within less than `d`: everyone accepts within 3d.
    Collective,
    /// No acceptance later than the initiator timeout after the last nonfaulty invocation.
    Unforgeability,
    /// Estimates of two acceptances never differ by an amount in `[6d, 2·removal − 3d]`.
    Uniqueness,
    /// A timely acceptance has a nonfaulty invocation after its estimate and all
    /// nonfaulty nodes accept within 2d.
    Relay,
}

impl Property {
    pub const ALL: [Property; 5] =
        [Property::Correctness, Property::Collective, Property::Unforgeability, Property::Uniqueness, Property::Relay];

    pub fn name(self) -> &'static str {
        match self {
            Property::Correctness => "correctness",
            Property::Collective => "collective-correctness",
            Property::Unforgeability => "unforgeability",
            Property::Uniqueness => "uniqueness",
            Property::Relay => "relay",
        }
    }
}

/// An acceptance observed in a schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Acceptance {
    pub node: usize,
    pub at: RefTime,
    /// Reference instant of the estimated tick at the accepting node.
    pub estimate_at: RefTime,
    pub lag_ticks: u64,
}

/// Outcome of one schedule.
#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub invocations: Vec<(usize, RefTime)>,
    pub acceptances: Vec<Acceptance>,
    pub initiator_at: Option<RefTime>,
}

enum Ev {
    Tick,
    Invoke,
    Deliver { from: usize, wire: Wire },
}

const GENERAL: usize = 0;

struct Run {
    n: usize,
    scale: TimeScale,
    bound: u64,
    ring: Ring,
    faulty: Vec<usize>,
    nodes: Vec<Acceptor>,
    clocks: Vec<ClockModel>,
    ticks: Vec<u64>,
    queue: EventQueue<Ev>,
    rng: ChaCha8Rng,
    out: Outcome,
}

impl Run {
    fn new(p: &ParamSet, seed: u64, faulty: Vec<usize>) -> Self {
        let scale = if p.drift == Rational::from_integer(0) { TimeScale::DEFAULT } else { TimeScale::FINE };
        let ring = Ring::new(p.default_clock_modulus());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = AcceptConfig::from_params(p, ring);
        let one = Rational::from_integer(1);
        let clocks = (0..p.n)
            .map(|i| {
                let k = rng.gen_range(0..=1000i128);
                let rate = one + (p.rate_bound - one) * Rational::new(k, 1000);
                let first = RefTime(rng.gen_range(1..=scale.units()));
                let offset = LocalTime(rng.gen_range(0..ring.modulus()));
                ClockModel::new(i, offset, first, DriftSchedule::Constant { rate }, scale, p.rate_bound)
            })
            .collect::<Vec<_>>();
        let mut queue = EventQueue::new();
        for (i, c) in clocks.iter().enumerate() {
            queue.schedule(c.first_tick, i, 0, Ev::Tick, None).expect("future");
        }
        Self {
            n: p.n,
            scale,
            bound: scale.ceil(&p.delay).0,
            ring,
            nodes: (0..p.n).map(|i| Acceptor::new(i, cfg)).collect(),
            faulty,
            clocks,
            ticks: vec![0; p.n],
            queue,
            rng,
            out: Outcome::default(),
        }
    }

    fn honest(&self) -> Vec<usize> {
        (0..self.n).filter(|i| !self.faulty.contains(i)).collect()
    }

    fn local(&mut self, node: usize) -> LocalTime {
        let offset = self.clocks[node].offset;
        self.ring.add(offset, self.ticks[node])
    }

    fn send(&mut self, from: usize, to: usize, wire: Wire, delay: u64) {
        let at = self.queue.now() + RefTime(delay);
        self.queue.schedule(at, to, 2, Ev::Deliver { from, wire }, None).expect("future");
    }

    fn broadcast(&mut self, from: usize, wire: Wire) {
        for to in 0..self.n {
            let d = if to == from { 0 } else { self.rng.gen_range(0..self.bound) };
            self.send(from, to, wire, d);
        }
    }

    /// Random faulty support and confirm traffic in `[0, until]` ticks.
    fn noise(&mut self, until: u64, per_node: usize) {
        let unit = self.scale.units();
        for z in self.faulty.clone() {
            for _ in 0..per_node {
                let at = RefTime(self.rng.gen_range(0..=until * unit));
                let wire = if self.rng.gen_bool(0.5) {
                    Wire::Support { general: GENERAL }
                } else {
                    Wire::Confirm { general: GENERAL }
                };
                let mut targets: Vec<usize> = (0..self.n).collect();
                targets.shuffle(&mut self.rng);
                let k = self.rng.gen_range(1..=self.n);
                for &to in &targets[..k] {
                    let d = self.rng.gen_range(0..self.bound);
                    self.queue.schedule(at + RefTime(d), to, 2, Ev::Deliver { from: z, wire }, None).expect("future");
                }
            }
        }
    }

    fn invoke_at(&mut self, node: usize, at: RefTime) {
        self.queue.schedule(at, node, 1, Ev::Invoke, None).expect("future");
    }

    fn apply(&mut self, node: usize, fx: Effects) {
        for a in fx.actions {
            match a {
                Action::Broadcast(w) => self.broadcast(node, w),
                Action::Emit(EventKind::G1, _) => self.out.invocations.push((node, self.queue.now())),
                Action::Emit(EventKind::G2, Payload::Estimate { estimate, .. }) => {
                    let now_local = self.local(node);
                    let lag = self.ring.diff(now_local, estimate);
                    let done = self.ticks[node];
                    let estimate_at =
                        if lag >= done { RefTime::ZERO } else { self.clocks[node].tick_time(done - 1 - lag) };
                    self.out.acceptances.push(Acceptance { node, at: self.queue.now(), estimate_at, lag_ticks: lag });
                }
                _ => {}
            }
        }
    }

    fn run(mut self, horizon_ticks: u64) -> Outcome {
        let horizon = self.scale.ticks(horizon_ticks);
        while let Some(t) = self.queue.peek_time() {
            if t > horizon {
                break;
            }
            let e = self.queue.pop().expect("peeked");
            let node = e.node;
            let faulty = self.faulty.contains(&node);
            let mut fx = Effects::default();
            match e.payload {
                Ev::Tick => {
                    self.ticks[node] += 1;
                    let next = self.clocks[node].tick_time(self.ticks[node]);
                    self.queue.schedule(next, node, 0, Ev::Tick, None).expect("future");
                    self.nodes[node].on_tick();
                }
                Ev::Invoke if !faulty => self.nodes[node].invoke(GENERAL, &mut fx),
                Ev::Invoke => {}
                Ev::Deliver { .. } if faulty => {}
                Ev::Deliver { from, wire: Wire::Initiator } => {
                    if from == GENERAL {
                        self.nodes[node].invoke(GENERAL, &mut fx);
                    }
                }
                Ev::Deliver { from, wire } => {
                    let now = self.local(node);
                    match wire {
                        Wire::Support { general } => {
                            self.nodes[node].on_support(general, from, now, &mut fx);
                        }
                        Wire::Confirm { general } => {
                            self.nodes[node].on_confirm(general, from, now, &mut fx);
                        }
                        _ => {}
                    }
                }
            }
            self.apply(node, fx);
        }
        self.out
    }
}

/// Tick-valued bounds used by the checks.
#[derive(Debug, Clone, Copy)]
struct Bounds {
    unit: u64,
    d: u64,
    lag: u64,
    timeout: u64,
    removal: u64,
    agreement: u64,
}

fn bounds(p: &ParamSet, scale: TimeScale) -> Bounds {
    Bounds {
        unit: scale.units(),
        d: scale.ceil(&p.delay).0,
        lag: crate::params::floor_int(&(Rational::from_integer(4) * p.rate_bound * p.delay)) as u64,
        timeout: scale.ceil(&p.initiator_timeout).0,
        removal: scale.ceil(&p.removal_window).0,
        agreement: scale.ceil(&p.agreement_window).0,
    }
}

/// Runs schedule `seed` for `prop` and returns a description of any violation.
pub fn check(p: &ParamSet, prop: Property, seed: u64) -> Option<String> {
    let s = schedule(p, prop, seed);
    evaluate(prop, &s.outcome, &s.honest, &bounds(p, s.scale))
}

/// A completed schedule.
#[derive(Debug, Clone)]
pub struct Schedule {
    pub outcome: Outcome,
    pub honest: Vec<usize>,
    pub faulty: Vec<usize>,
    pub scale: TimeScale,
}

/// Runs schedule `seed` for `prop`.
pub fn schedule(p: &ParamSet, prop: Property, seed: u64) -> Schedule {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut ids: Vec<usize> = (0..p.n).collect();
    ids.shuffle(&mut rng);
    let nf = rng.gen_range(0..=p.f);
    let general_faulty =
        matches!(prop, Property::Uniqueness | Property::Relay | Property::Unforgeability | Property::Collective)
            && rng.gen_bool(0.5);
    let mut faulty: Vec<usize> = ids.into_iter().filter(|i| *i != GENERAL).take(nf).collect();
    if general_faulty && nf > 0 {
        faulty[0] = GENERAL;
    }
    let mut run = Run::new(p, seed, faulty.clone());
    let b = bounds(p, run.scale);
    let honest = run.honest();
    let unit = b.unit;
    let horizon = 3 * b.timeout / unit + 400;
    match prop {
        Property::Correctness => {
            let t0 = RefTime(rng.gen_range(unit..=50 * unit));
            run.out.initiator_at = Some(t0);
            // The General distributes its initiator at t0.
            for to in 0..p.n {
                let d = if to == GENERAL { 0 } else { rng.gen_range(0..run.bound) };
                run.queue
                    .schedule(t0 + RefTime(d), to, 2, Ev::Deliver { from: GENERAL, wire: Wire::Initiator }, None)
                    .ok();
            }
            run.noise(60, 6);
        }
        Property::Collective => {
            let start = rng.gen_range(unit..=50 * unit);
            let k = rng.gen_range(p.f + 1..=honest.len());
            let mut hs = honest.clone();
            hs.shuffle(&mut rng);
            for &h in &hs[..k] {
                let at = RefTime(start + rng.gen_range(0..b.d));
                run.invoke_at(h, at);
            }
            run.noise(60, 6);
        }
        Property::Unforgeability | Property::Uniqueness | Property::Relay => {
            let span = rng.gen_range(1..=400u64);
            let count = rng.gen_range(0..=2 * honest.len());
            for _ in 0..count {
                let h = honest[rng.gen_range(0..honest.len())];
                run.invoke_at(h, RefTime(rng.gen_range(unit..=span * unit)));
            }
            run.noise(span + 100, 12);
        }
    }
    let scale = run.scale;
    Schedule { outcome: run.run(horizon), honest, faulty, scale }
}

fn evaluate(prop: Property, out: &Outcome, honest: &[usize], b: &Bounds) -> Option<String> {
    let d = b.d;
    match prop {
        Property::Correctness => {
            let t0 = out.initiator_at?;
            for &h in honest {
                let Some(a) = out.acceptances.iter().find(|a| a.node == h) else {
                    return Some(format!("node {h} never accepted the initiator sent at {}", t0.0));
                };
                if a.at.0 > t0.0 + 4 * d {
                    return Some(format!("node {h} accepted {} units after the initiator", a.at.0 - t0.0));
                }
                if a.lag_ticks > b.lag {
                    return Some(format!("node {h} estimate lags {} ticks", a.lag_ticks));
                }
            }
            None
        }
        Property::Collective => {
            let first = out.invocations.iter().map(|i| i.1).min()?;
            for &h in honest {
                if !out.acceptances.iter().any(|a| a.node == h && a.at.0 <= first.0 + 3 * d) {
                    return Some(format!("node {h} did not accept within 3d of {}", first.0));
                }
            }
            None
        }
        Property::Unforgeability => {
            let last = out.invocations.iter().map(|i| i.1 .0).max();
            for a in &out.acceptances {
                match last {
                    None => return Some(format!("node {} accepted without any invocation", a.node)),
                    Some(l) if a.at.0 > l + b.timeout => {
                        return Some(format!("node {} accepted {} units after the last invocation", a.node, a.at.0 - l))
                    }
                    _ => {}
                }
            }
            None
        }
        Property::Uniqueness => {
            let lo = 6 * d;
            let hi = (2 * b.removal).saturating_sub(3 * d);
            for (i, x) in out.acceptances.iter().enumerate() {
                for y in &out.acceptances[i + 1..] {
                    let gap = x.estimate_at.0.abs_diff(y.estimate_at.0);
                    if gap >= lo && gap <= hi {
                        return Some(format!(
                            "estimates of nodes {} and {} differ by {gap} units, inside [{lo}, {hi}]",
                            x.node, y.node
                        ));
                    }
                }
            }
            None
        }
        Property::Relay => {
            for x in &out.acceptances {
                if x.at.0 - x.estimate_at.0 > b.agreement {
                    continue;
                }
                if !out.invocations.iter().any(|(_, t)| *t >= x.estimate_at && *t <= x.at) {
                    return Some(format!(
                        "acceptance at node {} ({}) has no nonfaulty invocation after its estimate ({})",
                        x.node, x.at.0, x.estimate_at.0
                    ));
                }
                // Some window [a, a+2d] holding x and an acceptance of every nonfaulty node.
                let windowed = out.acceptances.iter().filter(|y| y.at <= x.at && y.at.0 + 2 * d >= x.at.0).any(|y| {
                    honest.iter().all(|&h| {
                        out.acceptances.iter().any(|z| z.node == h && z.at >= y.at && z.at.0 <= y.at.0 + 2 * d)
                    })
                });
                if !windowed {
                    return Some(format!(
                        "no 2d window around node {} at {} holds every nonfaulty acceptance",
                        x.node, x.at.0
                    ));
                }
            }
            None
        }
    }
}

/// Runs `count` schedules for one property; returns the number run and the first failure.
pub fn sweep(p: &ParamSet, prop: Property, count: u64, base_seed: u64) -> (u64, Option<(u64, String)>) {
    for s in 0..count {
        if let Some(why) = check(p, prop, base_seed + s) {
            return (s + 1, Some((base_seed + s, why)));
        }
    }
    (count, None)
}
