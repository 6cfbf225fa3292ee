//! Execution traces: typed event records with a stable line format.

use crate::network::Wire;
use crate::time::{LocalTime, RefTime, TimeScale};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

/// Event types. The declaration order is the tie-break rank within one node and instant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EventKind {
    /// Clock tick.
    C,
    /// Message receipt.
    R,
    /// Absorption adjustment.
    D0,
    /// Counter assignment.
    K,
    /// Engagement adjustment.
    D1,
    /// Agreement output.
    G4,
    /// Appearance.
    H,
    /// Appearance adjustment.
    D2,
    /// Relax timer set.
    G5,
    /// New engaging observation.
    L1,
    /// New happy observation.
    L2,
    /// Initiator distributed.
    G0,
    /// Acceptance invoked (support sent).
    G1,
    /// Accepted.
    G2,
    /// Agreement instance started.
    G3,
    /// Pulse.
    P,
    /// Distribute.
    S,
    /// Diagnostic note.
    X,
}

impl EventKind {
    pub const ALL: [EventKind; 18] = [
        EventKind::C,
        EventKind::R,
        EventKind::D0,
        EventKind::K,
        EventKind::D1,
        EventKind::G4,
        EventKind::H,
        EventKind::D2,
        EventKind::G5,
        EventKind::L1,
        EventKind::L2,
        EventKind::G0,
        EventKind::G1,
        EventKind::G2,
        EventKind::G3,
        EventKind::P,
        EventKind::S,
        EventKind::X,
    ];

    /// Member of the emergency family.
    pub fn is_emergency(self) -> bool {
        use EventKind::*;
        matches!(self, G0 | G1 | G2 | G3 | G4 | G5 | H)
    }

    pub fn name(self) -> &'static str {
        use EventKind::*;
        match self {
            C => "C",
            R => "R",
            D0 => "D0",
            K => "K",
            D1 => "D1",
            G4 => "G4",
            H => "H",
            D2 => "D2",
            G5 => "G5",
            L1 => "L1",
            L2 => "L2",
            G0 => "G0",
            G1 => "G1",
            G2 => "G2",
            G3 => "G3",
            P => "P",
            S => "S",
            X => "X",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EventKind {
    type Err = TraceError;
    fn from_str(s: &str) -> Result<Self, TraceError> {
        EventKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| TraceError::Parse(format!("unknown kind `{s}`")))
    }
}

/// Kind-specific data.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Payload {
    None,
    Tick(LocalTime),
    Send(Wire),
    Recv { from: usize, wire: Wire },
    Pulse { counter: u32, tick: LocalTime },
    Schedule(LocalTime),
    Counter(u32),
    General { general: usize },
    Estimate { general: usize, estimate: LocalTime },
    Bit { general: usize, bit: bool },
    Note(String),
}

impl fmt::Display for Payload {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Payload::None => f.write_str("-"),
            Payload::Tick(t) => write!(f, "tick={t}"),
            Payload::Send(w) => write!(f, "wire={w}"),
            Payload::Recv { from, wire } => write!(f, "from={from} wire={wire}"),
            Payload::Pulse { counter, tick } => write!(f, "counter={counter} tick={tick}"),
            Payload::Schedule(t) => write!(f, "sched={t}"),
            Payload::Counter(k) => write!(f, "counter={k}"),
            Payload::General { general } => write!(f, "general={general}"),
            Payload::Estimate { general, estimate } => write!(f, "general={general} est={estimate}"),
            Payload::Bit { general, bit } => write!(f, "general={general} bit={}", *bit as u8),
            Payload::Note(s) => write!(f, "note={}", s.replace(['\t', '\n', ' '], "_")),
        }
    }
}

impl FromStr for Payload {
    type Err = TraceError;
    fn from_str(s: &str) -> Result<Self, TraceError> {
        if s == "-" {
            return Ok(Payload::None);
        }
        let bad = |m: &str| TraceError::Parse(format!("{m} in payload `{s}`"));
        let mut fields = Vec::new();
        for part in s.split(' ') {
            let (k, v) = part.split_once('=').ok_or_else(|| bad("missing `=`"))?;
            fields.push((k, v));
        }
        let get = |key: &str| fields.iter().find(|(k, _)| *k == key).map(|(_, v)| *v);
        let num =
            |key: &str| -> Result<u64, TraceError> { get(key).ok_or_else(|| bad(key))?.parse().map_err(|_| bad(key)) };
        let wire = || -> Result<Wire, TraceError> {
            get("wire").ok_or_else(|| bad("wire"))?.parse().map_err(|e: crate::network::WireError| bad(&e.to_string()))
        };
        let keys: Vec<&str> = fields.iter().map(|(k, _)| *k).collect();
        Ok(match keys.as_slice() {
            ["tick"] => Payload::Tick(LocalTime(num("tick")?)),
            ["wire"] => Payload::Send(wire()?),
            ["from", "wire"] => Payload::Recv { from: num("from")? as usize, wire: wire()? },
            ["counter", "tick"] => Payload::Pulse { counter: num("counter")? as u32, tick: LocalTime(num("tick")?) },
            ["sched"] => Payload::Schedule(LocalTime(num("sched")?)),
            ["counter"] => Payload::Counter(num("counter")? as u32),
            ["general"] => Payload::General { general: num("general")? as usize },
            ["general", "est"] => {
                Payload::Estimate { general: num("general")? as usize, estimate: LocalTime(num("est")?) }
            }
            ["general", "bit"] => Payload::Bit { general: num("general")? as usize, bit: num("bit")? != 0 },
            ["note"] => Payload::Note(get("note").unwrap_or_default().to_string()),
            _ => return Err(bad("unknown field set")),
        })
    }
}

/// One event `e(kind, time, node)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventRecord {
    pub time: RefTime,
    pub node: usize,
    pub kind: EventKind,
    pub payload: Payload,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TraceError {
    #[error("trace parse error: {0}")]
    Parse(String),
}

/// Scenario metadata carried with a trace.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TraceMeta {
    pub n: usize,
    pub f: usize,
    pub seed: u64,
    pub params_digest: String,
    pub faulty: Vec<usize>,
    pub scale: u64,
    pub modulus: u64,
    pub horizon: RefTime,
}

/// An execution, sorted by `(time, node, kind)`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Trace {
    pub meta: TraceMeta,
    pub events: Vec<EventRecord>,
}

impl Trace {
    /// Stable sort into canonical order.
    pub fn canonicalize(&mut self) {
        self.events.sort_by_key(|e| (e.time, e.node, e.kind));
    }

    pub fn scale(&self) -> TimeScale {
        TimeScale::new(self.meta.scale).unwrap_or_default()
    }

    pub fn is_faulty(&self, node: usize) -> bool {
        self.meta.faulty.contains(&node)
    }

    /// Events of nonfaulty nodes only.
    pub fn nonfaulty(&self) -> impl Iterator<Item = &EventRecord> {
        self.events.iter().filter(|e| !self.meta.faulty.contains(&e.node))
    }

    /// Textual export, one record per line after a header block.
    pub fn export(&self) -> String {
        let m = &self.meta;
        let scale = self.scale();
        let faulty: Vec<String> = m.faulty.iter().map(|x| x.to_string()).collect();
        let mut out = String::new();
        out.push_str(&format!("# n={} f={} seed={} params={}\n", m.n, m.f, m.seed, m.params_digest));
        out.push_str(&format!(
            "# faulty={} scale={} modulus={} horizon={}\n",
            if faulty.is_empty() { "-".to_string() } else { faulty.join(",") },
            m.scale,
            m.modulus,
            scale.fmt(m.horizon)
        ));
        for e in &self.events {
            out.push_str(&format!("{}\t{}\t{}\t{}\n", scale.fmt(e.time), e.node, e.kind, e.payload));
        }
        out
    }

    /// Inverse of [`Trace::export`].
    pub fn parse(text: &str) -> Result<Trace, TraceError> {
        let bad = |m: String| TraceError::Parse(m);
        let mut meta = TraceMeta::default();
        let mut events = Vec::new();
        for (no, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            if let Some(h) = line.strip_prefix("# ") {
                for kv in h.split(' ') {
                    let (k, v) = kv.split_once('=').ok_or_else(|| bad(format!("line {}: header `{kv}`", no + 1)))?;
                    let num = || v.parse::<u64>().map_err(|_| bad(format!("line {}: `{kv}`", no + 1)));
                    match k {
                        "n" => meta.n = num()? as usize,
                        "f" => meta.f = num()? as usize,
                        "seed" => meta.seed = num()?,
                        "params" => meta.params_digest = v.to_string(),
                        "faulty" if v == "-" => meta.faulty.clear(),
                        "faulty" => {
                            meta.faulty = v
                                .split(',')
                                .map(|x| x.parse().map_err(|_| bad(format!("line {}: faulty", no + 1))))
                                .collect::<Result<_, _>>()?
                        }
                        "scale" => meta.scale = num()?,
                        "modulus" => meta.modulus = num()?,
                        "horizon" => {}
                        _ => return Err(bad(format!("line {}: unknown header `{k}`", no + 1))),
                    }
                    if k == "horizon" {
                        let s = TimeScale::new(meta.scale).unwrap_or_default();
                        meta.horizon = s.parse(v).ok_or_else(|| bad(format!("line {}: horizon", no + 1)))?;
                    }
                }
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 4 {
                return Err(bad(format!("line {}: expected 4 columns", no + 1)));
            }
            let scale = TimeScale::new(meta.scale).unwrap_or_default();
            let time = scale.parse(cols[0]).ok_or_else(|| bad(format!("line {}: time `{}`", no + 1, cols[0])))?;
            let node = cols[1].parse().map_err(|_| bad(format!("line {}: node", no + 1)))?;
            events.push(EventRecord { time, node, kind: cols[2].parse()?, payload: cols[3].parse()? });
        }
        Ok(Trace { meta, events })
    }

    /// Short content hash of the export.
    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        hex::encode(&Sha256::digest(self.export().as_bytes())[..16])
    }
}
