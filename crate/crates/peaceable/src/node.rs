//! Effects requested by node state machines and carried out by the simulator.

use crate::network::Wire;
use crate::time::LocalTime;
use crate::trace::{EventKind, Payload};

/// Cancellation class of a pending continuation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Level {
    Absorb,
    Engage,
    /// Agreement instance run on behalf of a general.
    Agreement(usize),
}

/// What a continuation does when it fires.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Step {
    /// Absorption adjustment for the pulse at the given tick.
    Absorb {
        pulse: LocalTime,
    },
    EngageAdjust,
    EngageSettle,
    /// Agreement round boundary `index` (1-based) for `general`.
    Round {
        general: usize,
        index: u32,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Action {
    /// Append an event to the trace.
    Emit(EventKind, Payload),
    /// Send to every node, self included.
    Broadcast(Wire),
    /// Run `step` after `ticks` local ticks unless `level` is cancelled first.
    Wait {
        ticks: u64,
        level: Level,
        step: Step,
    },
    Cancel(Level),
    CancelAll,
}

/// Output buffer handed to handlers.
#[derive(Debug, Default)]
pub struct Effects {
    pub actions: Vec<Action>,
}

impl Effects {
    pub fn emit(&mut self, kind: EventKind, payload: Payload) {
        self.actions.push(Action::Emit(kind, payload));
    }

    pub fn note(&mut self, text: impl Into<String>) {
        self.emit(EventKind::X, Payload::Note(text.into()));
    }

    pub fn broadcast(&mut self, wire: Wire) {
        self.actions.push(Action::Broadcast(wire));
    }

    pub fn wait(&mut self, ticks: u64, level: Level, step: Step) {
        self.actions.push(Action::Wait { ticks, level, step });
    }

    pub fn cancel(&mut self, level: Level) {
        self.actions.push(Action::Cancel(level));
    }

    pub fn cancel_all(&mut self) {
        self.actions.push(Action::CancelAll);
    }

    pub fn take(&mut self) -> Vec<Action> {
        std::mem::take(&mut self.actions)
    }
}

use crate::bunny::{Bunny, BunnyConfig};
use crate::hoppelpopp::{EmergencyConfig, Hoppelpopp, Outcome};
use crate::params::ParamSet;
use crate::time::Ring;

/// One protocol participant: the pulsing layer plus the emergency process.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node {
    pub bunny: Bunny,
    pub emergency: Hoppelpopp,
}

impl Node {
    pub fn new(me: usize, p: &ParamSet, ring: Ring) -> Self {
        Self {
            bunny: Bunny::new(me, BunnyConfig::from_params(p, ring)),
            emergency: Hoppelpopp::new(me, EmergencyConfig::from_params(p, ring)),
        }
    }

    pub fn on_tick(&mut self, fx: &mut Effects) {
        self.emergency.on_tick();
        if self.bunny.on_tick(fx) {
            self.emergency.help(fx);
        }
    }

    pub fn on_receive(&mut self, from: usize, wire: Wire, fx: &mut Effects) {
        match wire {
            Wire::Mark(v) => {
                if self.bunny.on_mark(v, from, fx) {
                    self.emergency.help(fx);
                }
            }
            other => self.emergency.on_message(from, other, self.bunny.is_happy, self.bunny.now, fx),
        }
    }

    pub fn on_step(&mut self, step: Step, fx: &mut Effects) {
        match step {
            Step::Round { general, index } => {
                if let Outcome::Appear { general } = self.emergency.on_step(general, index, fx) {
                    fx.emit(EventKind::H, Payload::General { general });
                    self.bunny.on_appearance(fx);
                    self.emergency.after_appearance(fx);
                }
            }
            other => self.bunny.on_step(other, fx),
        }
    }
}
