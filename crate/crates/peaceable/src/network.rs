//! Wire payloads and the fully connected bounded-delay message layer.

use crate::time::RefTime;
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

/// A subset of `{GOOD, BEST}`, encoded in two bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct MarkValue(u8);

impl MarkValue {
    pub const EMPTY: MarkValue = MarkValue(0);
    pub const GOOD: MarkValue = MarkValue(1);
    pub const BEST: MarkValue = MarkValue(2);
    pub const GOOD_BEST: MarkValue = MarkValue(3);
    pub const ALL: [MarkValue; 4] = [Self::EMPTY, Self::GOOD, Self::BEST, Self::GOOD_BEST];

    pub fn new(good: bool, best: bool) -> Self {
        MarkValue(good as u8 | (best as u8) << 1)
    }

    pub fn from_bits(bits: u8) -> Option<Self> {
        (bits < 4).then_some(MarkValue(bits))
    }

    pub fn bits(self) -> u8 {
        self.0
    }

    pub fn good(self) -> bool {
        self.0 & 1 != 0
    }

    pub fn best(self) -> bool {
        self.0 & 2 != 0
    }
}

impl fmt::Display for MarkValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self.0 {
            0 => "-",
            1 => "G",
            2 => "B",
            _ => "GB",
        })
    }
}

impl FromStr for MarkValue {
    type Err = WireError;
    fn from_str(s: &str) -> Result<Self, WireError> {
        match s {
            "-" => Ok(Self::EMPTY),
            "G" => Ok(Self::GOOD),
            "B" => Ok(Self::BEST),
            "GB" => Ok(Self::GOOD_BEST),
            _ => Err(WireError::Malformed(s.to_string())),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq, Clone)]
pub enum WireError {
    #[error("malformed payload `{0}`")]
    Malformed(String),
    #[error("general {0} is not a node")]
    UnknownGeneral(usize),
    #[error("round {0} outside 1..={1}")]
    BadRound(u32, u32),
}

/// Everything that travels between nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Wire {
    Mark(MarkValue),
    /// The sender asks for an emergency agreement under its own name.
    Initiator,
    Support {
        general: usize,
    },
    Confirm {
        general: usize,
    },
    /// Agreement message for round `round` of the instance run for `general`.
    Round {
        general: usize,
        round: u32,
        bit: bool,
    },
}

impl Wire {
    pub fn is_mark(&self) -> bool {
        matches!(self, Wire::Mark(_))
    }

    /// Channel class used for the one-message-per-instant rule.
    pub fn class(&self) -> u8 {
        match self {
            Wire::Mark(_) => 0,
            Wire::Initiator => 1,
            Wire::Support { .. } => 2,
            Wire::Confirm { .. } => 3,
            Wire::Round { .. } => 4,
        }
    }

    /// Rejects payloads outside the valid alphabet for an `n`-node system.
    pub fn check(&self, n: usize, ba_rounds: u32) -> Result<(), WireError> {
        match *self {
            Wire::Support { general } | Wire::Confirm { general } if general >= n => {
                Err(WireError::UnknownGeneral(general))
            }
            Wire::Round { general, .. } if general >= n => Err(WireError::UnknownGeneral(general)),
            Wire::Round { round, .. } if round == 0 || round > ba_rounds => Err(WireError::BadRound(round, ba_rounds)),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for Wire {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Wire::Mark(v) => write!(f, "mark:{v}"),
            Wire::Initiator => f.write_str("init"),
            Wire::Support { general } => write!(f, "support:{general}"),
            Wire::Confirm { general } => write!(f, "confirm:{general}"),
            Wire::Round { general, round, bit } => write!(f, "round:{general}:{round}:{}", *bit as u8),
        }
    }
}

impl FromStr for Wire {
    type Err = WireError;
    fn from_str(s: &str) -> Result<Self, WireError> {
        let bad = || WireError::Malformed(s.to_string());
        let mut it = s.split(':');
        let head = it.next().ok_or_else(bad)?;
        let mut num = || -> Result<usize, WireError> { it.next().ok_or_else(bad)?.parse().map_err(|_| bad()) };
        let w = match head {
            "mark" => return s.get(5..).ok_or_else(bad)?.parse().map(Wire::Mark),
            "init" => Wire::Initiator,
            "support" => Wire::Support { general: num()? },
            "confirm" => Wire::Confirm { general: num()? },
            "round" => {
                let general = num()?;
                let round = num()? as u32;
                let bit = match num()? {
                    0 => false,
                    1 => true,
                    _ => return Err(bad()),
                };
                Wire::Round { general, round, bit }
            }
            _ => return Err(bad()),
        };
        Ok(w)
    }
}

/// One point-to-point message.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Message {
    pub sender: usize,
    pub receiver: usize,
    pub sent: RefTime,
    pub wire: Wire,
}

/// A message together with its arrival instant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Delivery {
    pub message: Message,
    pub at: RefTime,
}

#[derive(Debug, Error, PartialEq, Eq, Clone)]
pub enum NetError {
    #[error("node {0} is not faulty")]
    NotFaulty(usize),
    #[error("receiver {0} is not a node")]
    UnknownReceiver(usize),
    #[error("delay {delay} not below the bound {bound}")]
    DelayTooLong { delay: u64, bound: u64 },
    #[error(transparent)]
    Wire(#[from] WireError),
}

/// Sends one value from a nonfaulty `sender` to every node, itself at zero delay.
///
/// `delay` is asked once per remote receiver; answers at or above `bound`
/// grid units are clamped to `bound − 1`.
pub fn distribute(
    sender: usize,
    wire: Wire,
    sent: RefTime,
    n: usize,
    bound: u64,
    mut delay: impl FnMut(&Message) -> u64,
) -> Vec<Delivery> {
    (0..n)
        .map(|receiver| {
            let message = Message { sender, receiver, sent, wire };
            let d = if receiver == sender { 0 } else { delay(&message).min(bound.saturating_sub(1)) };
            Delivery { message, at: sent + RefTime(d) }
        })
        .collect()
}

/// Per-recipient emissions of a faulty node: `(receiver, wire, delay)`.
pub fn byzantine_emit(
    sender: usize,
    faulty: &[usize],
    sent: RefTime,
    n: usize,
    ba_rounds: u32,
    bound: u64,
    emissions: &[(usize, Wire, u64)],
) -> Result<Vec<Delivery>, NetError> {
    if !faulty.contains(&sender) {
        return Err(NetError::NotFaulty(sender));
    }
    emissions
        .iter()
        .map(|&(receiver, wire, delay)| {
            if receiver >= n {
                return Err(NetError::UnknownReceiver(receiver));
            }
            if delay >= bound {
                return Err(NetError::DelayTooLong { delay, bound });
            }
            wire.check(n, ba_rounds)?;
            Ok(Delivery { message: Message { sender, receiver, sent, wire }, at: sent + RefTime(delay) })
        })
        .collect()
}
