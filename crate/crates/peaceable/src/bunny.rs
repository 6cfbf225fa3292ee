//! Pulsing, marking and the two-stage absorption of a single node.

use crate::network::{MarkValue, Wire};
use crate::node::{Effects, Level, Step};
use crate::params::ParamSet;
use crate::time::{LocalTime, Ring};
use crate::trace::{EventKind, Payload};
use crate::trails::{Selector, Thresholds, Trail};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FtaError {
    #[error("only {usable} usable entries, need more than {f}")]
    TooFew { usable: usize, f: usize },
}

/// Fault-tolerant average of single-valued marks.
///
/// Offsets are taken from `now ⊖ offset`. Sources with more than one mark are
/// dropped. The result is the floor midpoint of the `(f+1)`-th and the
/// `min(|S|, n−f)`-th smallest offsets.
pub fn ft_average(
    marks: &[(LocalTime, usize)],
    now: LocalTime,
    ring: Ring,
    n: usize,
    f: usize,
    offset: u64,
) -> Result<LocalTime, FtaError> {
    let base = ring.back(now, offset);
    let mut offsets: Vec<u64> = marks
        .iter()
        .filter(|(_, s)| marks.iter().filter(|(_, o)| o == s).count() == 1)
        .map(|(t, _)| ring.diff(*t, base))
        .collect();
    offsets.sort_unstable();
    if offsets.len() <= f {
        return Err(FtaError::TooFew { usable: offsets.len(), f });
    }
    let lo = offsets[f];
    let hi = offsets[offsets.len().min(n - f) - 1];
    Ok(ring.add(base, (lo + hi) / 2))
}

/// Diagnostic text recorded when a node becomes happy.
pub const HAPPY_NOTE: &str = "happy";
/// Diagnostic text recorded when a node stops being happy.
pub const UNHAPPY_NOTE: &str = "unhappy";

/// Tick-valued constants used by [`Bunny`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BunnyConfig {
    pub thresholds: Thresholds,
    pub ring: Ring,
    pub period: u64,
    pub cycles: u32,
    pub absorb_wait: u64,
    pub engage_wait: u64,
    pub settle_wait: u64,
    pub fta_offset: u64,
    pub absorb_window: u64,
    pub engage_adjust_window: u64,
    pub blanking: u64,
}

impl BunnyConfig {
    pub fn from_params(p: &ParamSet, ring: Ring) -> Self {
        let wait = ParamSet::wait_ticks;
        let window = ParamSet::window_ticks;
        Self {
            thresholds: Thresholds::from_params(p),
            ring,
            period: wait(&p.period),
            cycles: p.cycles,
            absorb_wait: wait(&p.absorb_wait),
            engage_wait: wait(&p.engage_wait),
            settle_wait: wait(&p.settle_wait),
            fta_offset: wait(&p.fta_offset),
            absorb_window: window(&p.absorb_window),
            engage_adjust_window: window(&p.engage_adjust_window),
            blanking: wait(&p.blanking),
        }
    }
}

/// Local state of the pulsing layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bunny {
    pub me: usize,
    pub cfg: BunnyConfig,
    /// Local clock reading.
    pub now: LocalTime,
    /// Local time of the next pulse.
    pub next_pulse: LocalTime,
    /// Absorption counter in `[0, cycles)`.
    pub counter: u32,
    pub is_good: bool,
    pub is_best: bool,
    pub is_happy: bool,
    pub trail: Trail,
    pub last_pulse: Option<LocalTime>,
    /// An engagement chain is pending.
    pub engaged: bool,
    engage_since: u64,
    happy_since: u64,
}

/// Arbitrary starting values for [`Bunny::with_state`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BunnyInit {
    pub now: u64,
    pub next_pulse: u64,
    pub counter: u32,
    pub last_pulse: Option<u64>,
}

impl Bunny {
    pub fn new(me: usize, cfg: BunnyConfig) -> Self {
        Self::with_state(me, cfg, BunnyInit::default())
    }

    /// Starts from arbitrary values, clamped into range.
    pub fn with_state(me: usize, cfg: BunnyConfig, init: BunnyInit) -> Self {
        let mut b = Self {
            me,
            cfg,
            now: LocalTime(init.now),
            next_pulse: LocalTime(init.next_pulse),
            counter: init.counter,
            is_good: false,
            is_best: false,
            is_happy: false,
            trail: Trail::new(),
            last_pulse: init.last_pulse.map(LocalTime),
            engaged: false,
            engage_since: 0,
            happy_since: 0,
        };
        b.clamp();
        b
    }

    fn clamp(&mut self) {
        let ring = self.cfg.ring;
        self.counter %= self.cfg.cycles.max(1);
        self.now = ring.wrap(self.now.0);
        self.next_pulse = ring.wrap(self.next_pulse.0);
        self.last_pulse = self.last_pulse.map(|p| ring.wrap(p.0));
    }

    /// Clock tick. Returns whether the node is unhappy and should ask for help.
    pub fn on_tick(&mut self, fx: &mut Effects) -> bool {
        self.clamp();
        let ring = self.cfg.ring;
        self.now = ring.add(self.now, 1);
        self.trail.on_tick();
        self.trail.prune(self.now, ring, self.cfg.thresholds.observation_window);
        let help = self.observe(fx);
        if self.now == self.next_pulse {
            self.pulse(fx);
        }
        help
    }

    /// Mark receipt. Returns whether help is needed.
    pub fn on_mark(&mut self, value: MarkValue, from: usize, fx: &mut Effects) -> bool {
        self.clamp();
        self.trail.record(value, self.now, from);
        self.observe(fx)
    }

    /// Evaluates the current trail.
    fn observe(&mut self, fx: &mut Effects) -> bool {
        let th = self.cfg.thresholds;
        let ring = self.cfg.ring;
        self.is_best = th.shortcut(&self.trail, self.me, self.now, ring);
        let happy = th.happy(&self.trail, self.now, ring);
        if happy != self.is_happy {
            fx.note(if happy { HAPPY_NOTE } else { UNHAPPY_NOTE });
        }
        self.is_happy = happy;
        if th.engaging(&self.trail, self.now, ring, Some(self.engage_since)) {
            self.engage_since = self.trail.next_seq();
            fx.emit(EventKind::L1, Payload::None);
            fx.cancel(Level::Absorb);
            fx.cancel(Level::Engage);
            self.engaged = true;
            fx.wait(self.cfg.engage_wait, Level::Engage, Step::EngageAdjust);
        }
        if th.happy_within(&self.trail, self.now, ring, th.precision_window, Some(self.happy_since)) {
            self.happy_since = self.trail.next_seq();
            fx.emit(EventKind::L2, Payload::None);
        }
        !self.is_happy
    }

    fn pulse(&mut self, fx: &mut Effects) {
        let ring = self.cfg.ring;
        let gap = self.last_pulse.map(|p| ring.diff(self.now, p));
        self.is_good = gap.is_some_and(|g| self.cfg.thresholds.is_good_gap(g));
        let value = MarkValue::new(self.is_good, self.is_best && self.counter == 0);
        fx.emit(EventKind::P, Payload::Pulse { counter: self.counter, tick: self.now });
        fx.broadcast(Wire::Mark(value));
        if self.counter > 0 && !self.engaged {
            fx.wait(self.cfg.absorb_wait, Level::Absorb, Step::Absorb { pulse: self.now });
        }
        self.last_pulse = Some(self.now);
    }

    /// Fires a continuation scheduled by this layer.
    pub fn on_step(&mut self, step: Step, fx: &mut Effects) {
        self.clamp();
        match step {
            Step::Absorb { pulse } => self.absorb(pulse, fx),
            Step::EngageAdjust => self.engage_adjust(fx),
            Step::EngageSettle => {
                self.engaged = false;
                self.set_counter(1, fx);
            }
            Step::Round { .. } => {}
        }
    }

    fn set_counter(&mut self, k: u32, fx: &mut Effects) {
        self.counter = k % self.cfg.cycles.max(1);
        fx.emit(EventKind::K, Payload::Counter(self.counter));
    }

    fn absorb(&mut self, pulse: LocalTime, fx: &mut Effects) {
        if self.counter == 0 {
            return;
        }
        let cfg = self.cfg;
        let ring = cfg.ring;
        let window: Vec<(LocalTime, usize)> = self
            .trail
            .points(Selector::Any, self.now, ring, cfg.absorb_window)
            .iter()
            .map(|p| (ring.back(self.now, p.age), p.source))
            .collect();
        let own: Vec<LocalTime> = window.iter().filter(|(_, s)| *s == self.me).map(|(t, _)| *t).collect();
        let reference = if own.len() == 1 {
            own[0]
        } else {
            fx.note(format!("absorb: {} own marks in window, using pulse tick", own.len()));
            pulse
        };
        let th = cfg.thresholds;
        match ft_average(&window, self.now, ring, th.n, th.f, cfg.fta_offset) {
            Ok(avg) => {
                let shifted = ring.wrap(self.next_pulse.0 + avg.0 + ring.modulus() - reference.0);
                self.next_pulse = ring.add(shifted, cfg.period);
                fx.emit(EventKind::D0, Payload::Schedule(self.next_pulse));
            }
            Err(e) => fx.note(format!("absorb skipped: {e}")),
        }
        self.set_counter(self.counter + 1, fx);
    }

    fn engage_adjust(&mut self, fx: &mut Effects) {
        let cfg = self.cfg;
        let ring = cfg.ring;
        let marks: Vec<(LocalTime, usize)> = self
            .trail
            .points(Selector::GoodBest, self.now, ring, cfg.engage_adjust_window)
            .iter()
            .map(|p| (ring.back(self.now, p.age), p.source))
            .collect();
        let th = cfg.thresholds;
        match ft_average(&marks, self.now, ring, th.n, th.f, cfg.fta_offset) {
            Ok(avg) => {
                self.next_pulse = ring.add(avg, cfg.period);
                fx.emit(EventKind::D1, Payload::Schedule(self.next_pulse));
                fx.wait(cfg.settle_wait, Level::Engage, Step::EngageSettle);
            }
            Err(e) => {
                self.engaged = false;
                fx.note(format!("engage aborted: {e}"));
            }
        }
    }

    /// Appearance: restart the schedule from the current tick.
    pub fn on_appearance(&mut self, fx: &mut Effects) {
        self.clamp();
        self.next_pulse = self.cfg.ring.add(self.now, self.cfg.period);
        self.counter = 1;
        self.engaged = false;
        fx.cancel_all();
        self.trail.clear_and_blank(self.cfg.blanking);
        self.engage_since = self.trail.next_seq();
        self.happy_since = self.trail.next_seq();
        fx.emit(EventKind::D2, Payload::Schedule(self.next_pulse));
    }
}
