//! Emergency process: help requests, acceptance and the agreement on appearance.

use crate::accept::{AcceptConfig, Accepted, Acceptor};
use crate::network::Wire;
use crate::node::{Effects, Level, Step};
use crate::params::{floor_int, ParamSet, Rational};
use crate::phase_king::{KingState, Rule};
use crate::time::{LocalTime, Ring};
use crate::trace::{EventKind, Payload};
use std::collections::BTreeMap;

/// Tick constants of the emergency process.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EmergencyConfig {
    pub n: usize,
    pub f: usize,
    pub ring: Ring,
    pub accept: AcceptConfig,
    /// Minimum spacing between own help requests.
    pub initiator_timeout: u64,
    pub relax_timeout: u64,
    pub round_wait: u64,
    pub ba_rounds: u32,
    pub rule: Rule,
    /// Largest estimate age that still starts a visible instance.
    pub start_limit: u64,
    /// Largest estimate age for which the instance input may be 1.
    pub vote_limit: u64,
}

impl EmergencyConfig {
    pub fn from_params(p: &ParamSet, ring: Ring) -> Self {
        let vd = p.rate_bound * p.delay;
        let k = |m: i128| floor_int(&(Rational::from_integer(m) * vd)) as u64;
        Self {
            n: p.n,
            f: p.f,
            ring,
            accept: AcceptConfig::from_params(p, ring),
            initiator_timeout: ParamSet::wait_ticks(&p.initiator_timeout),
            relax_timeout: ParamSet::wait_ticks(&p.relax_timeout),
            round_wait: ParamSet::wait_ticks(&p.round_wait),
            ba_rounds: p.ba_rounds,
            rule: if p.ba_rounds == Rule::TwoRound.rounds(p.f) { Rule::TwoRound } else { Rule::ThreeRound },
            start_limit: k(6),
            vote_limit: k(4),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Agreement {
    king: KingState,
    /// Round boundaries passed so far.
    index: u32,
    inbox: BTreeMap<u32, Vec<Option<bool>>>,
}

/// What the node must do after an agreement step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Nothing,
    /// The agreement returned 1: appear now.
    Appear {
        general: usize,
    },
}

/// Emergency state of one node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Hoppelpopp {
    pub me: usize,
    pub cfg: EmergencyConfig,
    pub acceptor: Acceptor,
    /// Remaining ticks until the help timer closes.
    pub help_timer: u64,
    /// Remaining ticks until the relax timer closes.
    pub relax_timer: u64,
    instances: BTreeMap<usize, Agreement>,
}

impl Hoppelpopp {
    pub fn new(me: usize, cfg: EmergencyConfig) -> Self {
        Self {
            me,
            cfg,
            acceptor: Acceptor::new(me, cfg.accept),
            help_timer: 0,
            relax_timer: 0,
            instances: BTreeMap::new(),
        }
    }

    /// Starts with the given timer readings, clamped to their timeouts.
    pub fn with_timers(me: usize, cfg: EmergencyConfig, help: u64, relax: u64) -> Self {
        let mut h = Self::new(me, cfg);
        h.help_timer = help.min(cfg.initiator_timeout);
        h.relax_timer = relax.min(cfg.relax_timeout);
        h
    }

    pub fn relax_closed(&self) -> bool {
        self.relax_timer == 0
    }

    /// Agreement instances currently running.
    pub fn running(&self) -> Vec<usize> {
        self.instances.keys().copied().collect()
    }

    pub fn on_tick(&mut self) {
        self.help_timer = self.help_timer.saturating_sub(1).min(self.cfg.initiator_timeout);
        self.relax_timer = self.relax_timer.saturating_sub(1).min(self.cfg.relax_timeout);
        self.acceptor.on_tick();
    }

    /// Asks everyone to accept this node as General, at most once per timeout.
    pub fn help(&mut self, fx: &mut Effects) {
        if self.help_timer > 0 {
            return;
        }
        self.help_timer = self.cfg.initiator_timeout;
        fx.emit(EventKind::G0, Payload::General { general: self.me });
        fx.broadcast(Wire::Initiator);
    }

    pub fn on_initiator(&mut self, from: usize, happy: bool, fx: &mut Effects) {
        if !happy && self.relax_closed() {
            self.acceptor.invoke(from, fx);
        }
    }

    /// Dispatches an emergency message. Marks are not handled here.
    pub fn on_message(&mut self, from: usize, wire: Wire, happy: bool, now: LocalTime, fx: &mut Effects) {
        let accepted = match wire {
            Wire::Initiator => {
                self.on_initiator(from, happy, fx);
                None
            }
            Wire::Support { general } => self.acceptor.on_support(general, from, now, fx),
            Wire::Confirm { general } => self.acceptor.on_confirm(general, from, now, fx),
            Wire::Round { general, round, bit } => {
                self.on_round(general, round, from, bit, fx);
                None
            }
            Wire::Mark(_) => None,
        };
        if let Some(a) = accepted {
            self.on_accepted(a, now, fx);
        }
    }

    /// Starts (or restarts) the agreement for an accepted General.
    pub fn on_accepted(&mut self, a: Accepted, now: LocalTime, fx: &mut Effects) {
        let cfg = self.cfg;
        let age = cfg.ring.diff(now, a.estimate);
        let input = if age <= cfg.start_limit {
            let bit = age <= cfg.vote_limit && self.relax_closed();
            fx.emit(EventKind::G3, Payload::Bit { general: a.general, bit });
            bit
        } else {
            false
        };
        fx.cancel(Level::Agreement(a.general));
        let king = KingState::new(cfg.n, cfg.f, self.me, input, cfg.rule);
        self.instances.insert(a.general, Agreement { king, index: 0, inbox: BTreeMap::new() });
        fx.wait(cfg.round_wait, Level::Agreement(a.general), Step::Round { general: a.general, index: 1 });
    }

    fn on_round(&mut self, general: usize, round: u32, from: usize, bit: bool, fx: &mut Effects) {
        let n = self.cfg.n;
        let Some(inst) = self.instances.get_mut(&general) else {
            fx.note(format!("round {round} for idle general {general} dropped"));
            return;
        };
        if round != inst.index && round != inst.index + 1 {
            fx.note(format!("round {round} for general {general} at boundary {} dropped", inst.index));
            return;
        }
        inst.inbox.entry(round).or_insert_with(|| vec![None; n])[from] = Some(bit);
    }

    /// Round boundary `index` of the agreement for `general`.
    pub fn on_step(&mut self, general: usize, index: u32, fx: &mut Effects) -> Outcome {
        let cfg = self.cfg;
        let Some(inst) = self.instances.get_mut(&general) else { return Outcome::Nothing };
        inst.index = index;
        if index >= 2 && index - 1 <= inst.king.rounds() {
            let round = index - 1;
            let got = inst.inbox.remove(&round).unwrap_or_else(|| vec![None; cfg.n]);
            inst.king.deliver(round, &got);
        }
        if index <= cfg.ba_rounds {
            if let Some(bit) = inst.king.outgoing(index) {
                fx.broadcast(Wire::Round { general, round: index, bit });
            }
            fx.wait(cfg.round_wait, Level::Agreement(general), Step::Round { general, index: index + 1 });
            return Outcome::Nothing;
        }
        let bit = inst.king.output().unwrap_or(false);
        self.instances.remove(&general);
        fx.emit(EventKind::G4, Payload::Bit { general, bit });
        if bit {
            Outcome::Appear { general }
        } else {
            Outcome::Nothing
        }
    }

    /// After an appearance: drop every agreement and open the relax period.
    pub fn after_appearance(&mut self, fx: &mut Effects) {
        self.instances.clear();
        self.relax_timer = self.cfg.relax_timeout;
        fx.emit(EventKind::G5, Payload::None);
    }
}
