//! Built-in adversary strategies: faulty behavior and delay choices.

use crate::network::{MarkValue, Message, Wire};
use crate::time::RefTime;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

/// Strategy selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    /// Random delays; faulty nodes, if any, follow the protocol.
    Benign,
    /// Faulty nodes follow the protocol until the given tick, then fall silent.
    Crash { at_tick: u64 },
    /// Faulty nodes send random valid messages at random instants.
    RandomByzantine,
    /// Faulty nodes echo marks as GOOD+BEST to half the nonfaulty nodes only;
    /// honest messages reach that half at once and the rest as late as possible.
    SplitWorld,
    /// Every delay is the largest allowed; faulty nodes are silent.
    DelayMaximizer,
    /// Faulty nodes keep adding GOOD+BEST marks next to nonfaulty ones.
    EngageSpammer,
}

impl Strategy {
    pub const NAMES: [&'static str; 6] =
        ["benign", "crash", "random-byzantine", "split-world", "delay-maximizer", "engage-spammer"];

    /// Whether faulty nodes run the protocol at `tick` (in whole reference ticks).
    pub fn runs_protocol(self, tick: u64) -> bool {
        match self {
            Strategy::Benign => true,
            Strategy::Crash { at_tick } => tick < at_tick,
            _ => false,
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Strategy::Benign => f.write_str("benign"),
            Strategy::Crash { at_tick } => write!(f, "crash@{at_tick}"),
            Strategy::RandomByzantine => f.write_str("random-byzantine"),
            Strategy::SplitWorld => f.write_str("split-world"),
            Strategy::DelayMaximizer => f.write_str("delay-maximizer"),
            Strategy::EngageSpammer => f.write_str("engage-spammer"),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("unknown adversary `{0}`")]
pub struct UnknownStrategy(pub String);

impl FromStr for Strategy {
    type Err = UnknownStrategy;
    fn from_str(s: &str) -> Result<Self, UnknownStrategy> {
        let bad = || UnknownStrategy(s.to_string());
        Ok(match s {
            "benign" => Strategy::Benign,
            "crash" => Strategy::Crash { at_tick: 0 },
            "random-byzantine" => Strategy::RandomByzantine,
            "split-world" => Strategy::SplitWorld,
            "delay-maximizer" => Strategy::DelayMaximizer,
            "engage-spammer" => Strategy::EngageSpammer,
            _ => match s.strip_prefix("crash@") {
                Some(t) => Strategy::Crash { at_tick: t.parse().map_err(|_| bad())? },
                None => return Err(bad()),
            },
        })
    }
}

/// A message a faulty node wants sent now.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Emission {
    pub sender: usize,
    pub receiver: usize,
    pub wire: Wire,
    pub delay: u64,
}

/// Read-only view handed to the strategy.
#[derive(Debug, Clone)]
pub struct View {
    pub now: RefTime,
    pub n: usize,
    pub faulty: Vec<usize>,
    pub honest: Vec<usize>,
    /// Message delay bound in grid units (exclusive).
    pub bound: u64,
    pub ba_rounds: u32,
    /// Grid units per tick.
    pub unit: u64,
    /// Engagement spread in ticks.
    pub engage_window: u64,
}

/// Strategy state.
#[derive(Debug, Clone)]
pub struct Adversary {
    pub strategy: Strategy,
    last_best: Option<RefTime>,
}

impl Adversary {
    pub fn new(strategy: Strategy) -> Self {
        Self { strategy, last_best: None }
    }

    /// Delay of a message between distinct nodes, below `view.bound`.
    pub fn delay(&mut self, view: &View, m: &Message, rng: &mut ChaCha8Rng) -> u64 {
        let top = view.bound - 1;
        match self.strategy {
            Strategy::DelayMaximizer => top,
            Strategy::SplitWorld => {
                if favored(view, m.receiver) {
                    0
                } else {
                    top
                }
            }
            _ => rng.gen_range(0..=top),
        }
    }

    /// Rushing hook: a nonfaulty node just distributed `wire`.
    pub fn on_distribute(&mut self, view: &View, wire: Wire, rng: &mut ChaCha8Rng) -> Vec<Emission> {
        let mut out = Vec::new();
        match (self.strategy, wire) {
            (Strategy::SplitWorld, Wire::Mark(_)) => {
                for &z in &view.faulty {
                    for &h in view.honest.iter().filter(|h| favored(view, **h)) {
                        out.push(Emission { sender: z, receiver: h, wire: Wire::Mark(MarkValue::GOOD_BEST), delay: 0 });
                    }
                }
            }
            (Strategy::SplitWorld, Wire::Support { general } | Wire::Confirm { general }) => {
                for &z in &view.faulty {
                    for &h in view.honest.iter().filter(|h| favored(view, **h)) {
                        out.push(Emission { sender: z, receiver: h, wire, delay: 0 });
                        out.push(Emission { sender: z, receiver: h, wire: Wire::Confirm { general }, delay: 0 });
                    }
                }
            }
            (Strategy::EngageSpammer, Wire::Mark(v)) if v == MarkValue::GOOD_BEST => {
                self.last_best = Some(view.now);
                for &z in &view.faulty {
                    for r in 0..view.n {
                        out.push(Emission { sender: z, receiver: r, wire, delay: rng.gen_range(0..view.bound) });
                    }
                }
            }
            _ => {}
        }
        out
    }

    /// Periodic hook, called once per reference tick.
    pub fn on_wake(&mut self, view: &View, rng: &mut ChaCha8Rng) -> Vec<Emission> {
        let mut out = Vec::new();
        match self.strategy {
            Strategy::RandomByzantine => {
                for &z in &view.faulty {
                    if !rng.gen_bool(0.25) {
                        continue;
                    }
                    let wire = random_wire(view, rng);
                    let mut targets: Vec<usize> = (0..view.n).collect();
                    targets.shuffle(rng);
                    let k = rng.gen_range(1..=view.n);
                    for &r in &targets[..k] {
                        out.push(Emission { sender: z, receiver: r, wire, delay: rng.gen_range(0..view.bound) });
                    }
                }
            }
            Strategy::EngageSpammer => {
                let recent =
                    self.last_best.is_some_and(|t| view.now.0.saturating_sub(t.0) <= view.engage_window * view.unit);
                if recent {
                    for &z in &view.faulty {
                        for r in 0..view.n {
                            let wire = Wire::Mark(MarkValue::GOOD_BEST);
                            out.push(Emission { sender: z, receiver: r, wire, delay: rng.gen_range(0..view.bound) });
                        }
                    }
                }
            }
            _ => {}
        }
        out
    }
}

/// First half of the nonfaulty nodes.
fn favored(view: &View, node: usize) -> bool {
    view.honest.iter().position(|h| *h == node).is_some_and(|i| i < view.honest.len().div_ceil(2))
}

fn random_wire(view: &View, rng: &mut ChaCha8Rng) -> Wire {
    let general = rng.gen_range(0..view.n);
    match rng.gen_range(0..10) {
        0..=5 => Wire::Mark(MarkValue::ALL[rng.gen_range(0..4)]),
        6 => Wire::Initiator,
        7 => Wire::Support { general },
        8 => Wire::Confirm { general },
        _ => Wire::Round { general, round: rng.gen_range(1..=view.ba_rounds.max(1)), bit: rng.gen() },
    }
}
