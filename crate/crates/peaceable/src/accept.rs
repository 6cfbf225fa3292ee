//! Initiator acceptance: a support/confirm echo protocol run per General.
//!
//! A node invoked for General `p` sends `Support(p)`. It sends `Confirm(p)`
//! once after `f+1` distinct supports or `f+1` distinct confirms, and accepts
//! after `n−f` distinct confirms, repeating its confirm unless it was sent on
//! the same tick. Sending either message is a response (G1).
//! Supports are remembered for about `2d` and confirms for `4ϑd`. The
//! estimated initiation tick is one delay bound before the earliest
//! remembered confirm, limited to `4ϑd` behind the acceptance tick. After
//! accepting, the General is ignored for a refractory period.

use crate::network::Wire;
use crate::node::Effects;
use crate::params::{ceil_int, floor_int, ParamSet, Rational};
use crate::time::{LocalTime, Ring};
use crate::trace::{EventKind, Payload};
use std::collections::BTreeMap;

/// Tick constants of the acceptance protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AcceptConfig {
    pub n: usize,
    pub f: usize,
    pub ring: Ring,
    /// Ticks a received or sent support is remembered.
    pub support_memory: u64,
    /// Ticks a received or sent confirm is remembered.
    pub confirm_memory: u64,
    /// Largest admissible `now − estimate`.
    pub max_lag: u64,
    /// Ticks covering one message delay.
    pub delay: u64,
    /// Ticks during which a General is ignored after an acceptance.
    pub refractory: u64,
}

impl AcceptConfig {
    pub fn from_params(p: &ParamSet, ring: Ring) -> Self {
        let vd = p.rate_bound * p.delay;
        let k = |m: i128| Rational::from_integer(m) * vd;
        Self {
            n: p.n,
            f: p.f,
            ring,
            support_memory: ceil_int(&k(2)) as u64 + 1,
            confirm_memory: floor_int(&k(4)) as u64,
            max_lag: floor_int(&k(4)) as u64,
            delay: ceil_int(&vd) as u64,
            refractory: ceil_int(&(Rational::from_integer(2) * p.removal_window + k(9))) as u64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Receipt {
    at: LocalTime,
    age: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct Instance {
    supports: BTreeMap<usize, Receipt>,
    confirms: BTreeMap<usize, Receipt>,
    /// Ticks since this node sent its support or confirm.
    supported: Option<u64>,
    confirmed: Option<u64>,
}

impl Instance {
    fn age(&mut self, cfg: &AcceptConfig) {
        for (m, limit) in [(&mut self.supports, cfg.support_memory), (&mut self.confirms, cfg.confirm_memory)] {
            m.retain(|_, r| {
                r.age += 1;
                r.age <= limit
            });
        }
        self.supported = self.supported.map(|a| a + 1).filter(|a| *a <= cfg.support_memory);
        self.confirmed = self.confirmed.map(|a| a + 1).filter(|a| *a <= cfg.confirm_memory);
    }

    fn is_empty(&self) -> bool {
        self.supports.is_empty() && self.confirms.is_empty() && self.supported.is_none() && self.confirmed.is_none()
    }
}

/// Per-General acceptance state of one node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Acceptor {
    pub me: usize,
    pub cfg: AcceptConfig,
    instances: BTreeMap<usize, Instance>,
    refractory: BTreeMap<usize, u64>,
}

/// Outcome of an acceptance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Accepted {
    pub general: usize,
    pub estimate: LocalTime,
}

impl Acceptor {
    pub fn new(me: usize, cfg: AcceptConfig) -> Self {
        Self { me, cfg, instances: BTreeMap::new(), refractory: BTreeMap::new() }
    }

    /// Whether `general` is currently ignored.
    pub fn is_refractory(&self, general: usize) -> bool {
        self.refractory.contains_key(&general)
    }

    /// Live instance count.
    pub fn live(&self) -> usize {
        self.instances.len()
    }

    fn instance(&mut self, general: usize) -> Option<&mut Instance> {
        if self.is_refractory(general) {
            return None;
        }
        Some(self.instances.entry(general).or_default())
    }

    /// Local invocation for `general`.
    pub fn invoke(&mut self, general: usize, fx: &mut Effects) {
        let Some(inst) = self.instance(general) else { return };
        if inst.supported.is_some() {
            return;
        }
        inst.supported = Some(0);
        fx.emit(EventKind::G1, Payload::General { general });
        fx.broadcast(Wire::Support { general });
    }

    pub fn on_support(&mut self, general: usize, from: usize, now: LocalTime, fx: &mut Effects) -> Option<Accepted> {
        let inst = self.instance(general)?;
        inst.supports.entry(from).or_insert(Receipt { at: now, age: 0 });
        self.progress(general, now, fx)
    }

    pub fn on_confirm(&mut self, general: usize, from: usize, now: LocalTime, fx: &mut Effects) -> Option<Accepted> {
        let inst = self.instance(general)?;
        inst.confirms.insert(from, Receipt { at: now, age: 0 });
        self.progress(general, now, fx)
    }

    fn progress(&mut self, general: usize, now: LocalTime, fx: &mut Effects) -> Option<Accepted> {
        let cfg = self.cfg;
        let inst = self.instances.get_mut(&general)?;
        if inst.confirmed.is_none() && (inst.supports.len() > cfg.f || inst.confirms.len() > cfg.f) {
            inst.confirmed = Some(0);
            fx.emit(EventKind::G1, Payload::General { general });
            fx.broadcast(Wire::Confirm { general });
        }
        if inst.confirms.len() < cfg.n - cfg.f {
            return None;
        }
        let oldest = inst.confirms.values().map(|r| cfg.ring.diff(now, r.at)).max().unwrap_or(0);
        let lag = oldest + cfg.delay;
        let estimate = cfg.ring.back(now, lag.min(cfg.max_lag));
        if inst.confirmed != Some(0) {
            fx.emit(EventKind::G1, Payload::General { general });
            fx.broadcast(Wire::Confirm { general });
        }
        self.instances.remove(&general);
        self.refractory.insert(general, cfg.refractory);
        fx.emit(EventKind::G2, Payload::Estimate { general, estimate });
        Some(Accepted { general, estimate })
    }

    /// Clock tick: ages instances and refractory periods.
    pub fn on_tick(&mut self) {
        let cfg = self.cfg;
        self.instances.retain(|_, i| {
            i.age(&cfg);
            !i.is_empty()
        });
        self.refractory.retain(|_, left| {
            *left = left.saturating_sub(1);
            *left > 0
        });
    }

    /// Drops every instance and refractory period.
    pub fn clear(&mut self) {
        self.instances.clear();
        self.refractory.clear();
    }
}
