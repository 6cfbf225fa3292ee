//! Trace analytics: synchronization, stabilization, contraction, emergency
//! monitors, message audit and the digital clock readout.

use crate::bunny::{HAPPY_NOTE, UNHAPPY_NOTE};
use crate::network::{MarkValue, Wire};
use crate::params::{ParamSet, Rational};
use crate::time::{RefTime, TimeScale};
use crate::trace::{EventKind, Payload, Trace};
use crate::trails::AlignError;
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

pub use crate::trails::{aligned_points as is_aligned_points, is_aligned};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CheckError {
    #[error("horizon {have} ticks is shorter than the required {need}")]
    HorizonTooShort { have: String, need: String },
    #[error(transparent)]
    Align(#[from] AlignError),
}

/// Nonfaulty pulse instants per node, sorted.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PulseProcess {
    pub nodes: Vec<usize>,
    pub pulses: Vec<Vec<RefTime>>,
}

impl PulseProcess {
    pub fn from_trace(trace: &Trace) -> Self {
        let nodes: Vec<usize> = (0..trace.meta.n).filter(|i| !trace.is_faulty(*i)).collect();
        let mut pulses = vec![Vec::new(); nodes.len()];
        for e in trace.nonfaulty().filter(|e| e.kind == EventKind::P) {
            if let Some(k) = nodes.iter().position(|x| *x == e.node) {
                pulses[k].push(e.time);
            }
        }
        for p in &mut pulses {
            p.sort_unstable();
        }
        Self { nodes, pulses }
    }

    /// Pulses at or after `t`.
    pub fn suffix(&self, t: RefTime) -> Self {
        Self {
            nodes: self.nodes.clone(),
            pulses: self.pulses.iter().map(|p| p.iter().copied().filter(|x| *x >= t).collect()).collect(),
        }
    }

    fn as_points(&self) -> Vec<Vec<i64>> {
        self.pulses.iter().map(|p| p.iter().map(|t| t.0 as i64).collect()).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.pulses.iter().all(|p| p.is_empty())
    }
}

/// Synchronization bounds in grid units.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SyncBounds {
    pub spread: i64,
    pub lower: i64,
    pub upper: i64,
}

impl SyncBounds {
    /// `(ε, φ⁻, φ⁺)` in ticks, rounded to the grid so that comparisons stay exact.
    pub fn from_ticks(scale: TimeScale, spread: &Rational, lower: &Rational, upper: &Rational) -> Self {
        Self {
            spread: scale.floor(spread).0 as i64,
            lower: scale.ceil(lower).0 as i64,
            upper: scale.floor(upper).0 as i64,
        }
    }

    /// Precision and period band of the default parameter set.
    pub fn pulses(p: &ParamSet, scale: TimeScale) -> Self {
        Self::from_ticks(scale, &p.precision, &p.period_min, &p.period_max)
    }
}

/// Points of `points` that violate the synchronization predicate, as
/// `(participant index, time)`. Successor checks are skipped when the window
/// reaches past `end`; interval checks are skipped within `spread` of `end`.
pub fn violations(points: &[Vec<i64>], b: SyncBounds, end: i64) -> Vec<(usize, i64)> {
    let mut all: Vec<i64> = points.iter().flatten().copied().collect();
    all.sort_unstable();
    let has_in = |xs: &[i64], lo: i64, hi: i64| {
        let i = xs.partition_point(|&x| x < lo);
        i < xs.len() && xs[i] <= hi
    };
    let mut out = Vec::new();
    for (k, xs) in points.iter().enumerate() {
        for (i, &t) in xs.iter().enumerate() {
            let mut ok = true;
            if t + b.spread <= end {
                let from = all.partition_point(|&x| x < t - b.spread);
                ok = all[from..]
                    .iter()
                    .take_while(|&&a| a <= t)
                    .any(|&a| points.iter().all(|ys| has_in(ys, a, a + b.spread)));
            }
            let next = xs.get(i + 1).copied();
            if next.is_some_and(|nx| nx < t + b.lower) {
                ok = false;
            }
            if t + b.upper <= end && !next.is_some_and(|nx| nx <= t + b.upper) {
                ok = false;
            }
            if !ok {
                out.push((k, t));
            }
        }
    }
    out
}

/// The synchronization predicate over `[.., end]`.
pub fn is_synchronized(process: &PulseProcess, b: SyncBounds, end: RefTime) -> Result<bool, CheckError> {
    if b.lower <= 3 * b.spread {
        return Err(AlignError::SpacingTooSmall { lower: b.lower, spread: b.spread }.into());
    }
    Ok(violations(&process.as_points(), b, end.0 as i64).is_empty())
}

/// Least pulse instant `t` such that the nonfaulty process on `[t, horizon]` is
/// synchronized and no nonfaulty emergency event happens in `[t, horizon]`.
pub fn detect_stabilization(trace: &Trace, p: &ParamSet) -> Result<Option<RefTime>, CheckError> {
    let scale = trace.scale();
    let horizon = trace.meta.horizon;
    let need = scale.ceil(&(p.stabilization_deadline() + Rational::from_integer(10 * p.cycles as i128) * p.period));
    if horizon < need {
        return Err(CheckError::HorizonTooShort { have: scale.fmt(horizon), need: scale.fmt(need) });
    }
    Ok(stabilization_point(trace, p))
}

/// [`detect_stabilization`] without the horizon requirement.
pub fn stabilization_point(trace: &Trace, p: &ParamSet) -> Option<RefTime> {
    let scale = trace.scale();
    let horizon = trace.meta.horizon;
    let bounds = SyncBounds::pulses(p, scale);
    let process = PulseProcess::from_trace(trace);
    let last_emergency = trace.nonfaulty().filter(|e| e.kind.is_emergency()).map(|e| e.time).max();
    let points = process.as_points();
    let bad = violations(&points, bounds, horizon.0 as i64);
    let floor = bad.iter().map(|(_, t)| *t).max();
    let mut candidates: Vec<RefTime> = process
        .pulses
        .iter()
        .flatten()
        .copied()
        .filter(|t| last_emergency.is_none_or(|g| *t > g) && floor.is_none_or(|f| t.0 as i64 > f))
        .collect();
    candidates.sort_unstable();
    candidates.dedup();
    candidates.into_iter().find(|t| violations(&process.suffix(*t).as_points(), bounds, horizon.0 as i64).is_empty())
}

/// Pulses of one cluster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PulseCluster {
    pub start: RefTime,
    pub end: RefTime,
    /// `(node, counter)` for every pulse in the cluster.
    pub members: Vec<(usize, u32)>,
}

impl PulseCluster {
    pub fn width(&self) -> u64 {
        self.end.0 - self.start.0
    }

    /// Common counter if every listed node pulsed exactly once with the same counter.
    pub fn uniform_counter(&self, nodes: &[usize]) -> Option<u32> {
        if self.members.len() != nodes.len() {
            return None;
        }
        let who: BTreeSet<usize> = self.members.iter().map(|m| m.0).collect();
        if who.len() != nodes.len() || !nodes.iter().all(|n| who.contains(n)) {
            return None;
        }
        let k = self.members[0].1;
        self.members.iter().all(|m| m.1 == k).then_some(k)
    }
}

/// Groups nonfaulty pulses, splitting wherever consecutive pulses are more than `gap` apart.
pub fn pulse_clusters(trace: &Trace, gap: u64) -> Vec<PulseCluster> {
    let mut ps: Vec<(RefTime, usize, u32)> = trace
        .nonfaulty()
        .filter_map(|e| match e.payload {
            Payload::Pulse { counter, .. } if e.kind == EventKind::P => Some((e.time, e.node, counter)),
            _ => None,
        })
        .collect();
    ps.sort_unstable();
    let mut out: Vec<PulseCluster> = Vec::new();
    for (t, node, k) in ps {
        match out.last_mut() {
            Some(c) if t.0 - c.end.0 <= gap => {
                c.end = t;
                c.members.push((node, k));
            }
            _ => out.push(PulseCluster { start: t, end: t, members: vec![(node, k)] }),
        }
    }
    out
}

/// Cluster-splitting gap: half a period.
fn split_gap(p: &ParamSet, scale: TimeScale) -> u64 {
    scale.floor(&(p.period_min / Rational::from_integer(2))).0
}

/// One absorption run: widths of the clusters with counters `1, 2, …`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AbsorptionRun {
    pub start: RefTime,
    pub widths: Vec<u64>,
}

/// Contraction measurements with any bound violations.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ConvergenceReport {
    pub runs: Vec<AbsorptionRun>,
    pub violations: Vec<String>,
}

impl ConvergenceReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Splits the trace into absorption runs and checks the halving recurrence and envelope.
pub fn convergence_series(trace: &Trace, p: &ParamSet) -> ConvergenceReport {
    let scale = trace.scale();
    let nodes: Vec<usize> = (0..trace.meta.n).filter(|i| !trace.is_faulty(*i)).collect();
    let clusters = pulse_clusters(trace, split_gap(p, scale));
    let disturb: Vec<RefTime> = trace
        .nonfaulty()
        .filter(|e| matches!(e.kind, EventKind::H | EventKind::D2 | EventKind::D1))
        .map(|e| e.time)
        .collect();
    let disturbed = |a: RefTime, b: RefTime| {
        let i = disturb.partition_point(|t| *t <= a);
        i < disturb.len() && disturb[i] < b
    };
    let unit = Rational::from_integer(scale.units() as i128);
    let slack = (p.delay + p.drift / p.rate_bound * p.period) * unit;
    let coarse = p.coarse_spread * unit;
    let cycles = p.cycles;
    let mut report = ConvergenceReport::default();
    let mut i = 0;
    while i < clusters.len() {
        if clusters[i].uniform_counter(&nodes) != Some(1) {
            i += 1;
            continue;
        }
        let mut run = AbsorptionRun { start: clusters[i].start, widths: vec![clusters[i].width()] };
        let mut j = i;
        while j + 1 < clusters.len() && run.widths.len() < cycles as usize {
            let want = (run.widths.len() as u32 + 1) % cycles;
            let next = &clusters[j + 1];
            if next.uniform_counter(&nodes) != Some(want) || disturbed(clusters[j].end, next.start) {
                break;
            }
            run.widths.push(next.width());
            j += 1;
        }
        for (k, w) in run.widths.iter().enumerate() {
            let w = Rational::from_integer(*w as i128);
            let envelope = coarse * Rational::new(2, 1 << k.min(60)) + Rational::from_integer(2) * slack;
            if w > envelope {
                report.violations.push(format!(
                    "run at {}: width {} of cluster {} exceeds envelope {}",
                    scale.fmt(run.start),
                    w / unit,
                    k + 1,
                    envelope / unit
                ));
            }
            if k > 0 {
                let prev = Rational::from_integer(run.widths[k - 1] as i128);
                if w > prev / Rational::from_integer(2) + slack {
                    report.violations.push(format!(
                        "run at {}: width {} after {} breaks the halving bound",
                        scale.fmt(run.start),
                        w / unit,
                        prev / unit
                    ));
                }
            }
        }
        report.runs.push(run);
        i = j + 1;
    }
    report
}

/// Outcome of the four emergency monitors.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct EmergencyReport {
    pub liveness: Vec<String>,
    pub peaceability: Vec<String>,
    pub good_luck: Vec<String>,
    pub separation: Vec<String>,
    /// `(start, end)` of each appearance cluster.
    pub clusters: Vec<(RefTime, RefTime)>,
}

impl EmergencyReport {
    pub fn passed(&self) -> bool {
        self.liveness.is_empty()
            && self.peaceability.is_empty()
            && self.good_luck.is_empty()
            && self.separation.is_empty()
    }
}

/// Intervals during which every nonfaulty node is happy.
pub fn all_happy_intervals(trace: &Trace) -> Vec<(RefTime, RefTime)> {
    let nodes: Vec<usize> = (0..trace.meta.n).filter(|i| !trace.is_faulty(*i)).collect();
    let mut happy: BTreeMap<usize, bool> = nodes.iter().map(|n| (*n, false)).collect();
    let mut out = Vec::new();
    let mut since: Option<RefTime> = None;
    for e in trace.nonfaulty().filter(|e| e.kind == EventKind::X) {
        let Payload::Note(text) = &e.payload else { continue };
        let v = match text.as_str() {
            HAPPY_NOTE => true,
            UNHAPPY_NOTE => false,
            _ => continue,
        };
        happy.insert(e.node, v);
        let all = happy.values().all(|h| *h);
        match (all, since) {
            (true, None) => since = Some(e.time),
            (false, Some(s)) => {
                out.push((s, e.time));
                since = None;
            }
            _ => {}
        }
    }
    if let Some(s) = since {
        out.push((s, trace.meta.horizon));
    }
    out
}

/// Checks liveness, peaceability, good luck and separation over the whole trace.
pub fn emergency_properties(trace: &Trace, p: &ParamSet) -> EmergencyReport {
    let scale = trace.scale();
    let horizon = trace.meta.horizon;
    let ticks = |r: &Rational| scale.ceil(r);
    let nodes: Vec<usize> = (0..trace.meta.n).filter(|i| !trace.is_faulty(*i)).collect();
    let mut rep = EmergencyReport::default();

    let from = scale.floor(&p.convergence_bound);
    let window = scale.floor(&p.liveness_window);
    let mut marks: Vec<RefTime> = trace
        .nonfaulty()
        .filter(|e| matches!(e.kind, EventKind::H | EventKind::L2) && e.time >= from)
        .map(|e| e.time)
        .collect();
    marks.push(horizon);
    let mut prev = from;
    for t in marks {
        if t > prev && t.0 - prev.0 > window.0 && prev + window <= horizon {
            rep.liveness.push(format!("no H or L2 in ({}, {})", scale.fmt(prev), scale.fmt(prev + window)));
        }
        prev = prev.max(t);
    }

    let quiet = ticks(&p.quiet_after_happy);
    for (a, b) in all_happy_intervals(trace) {
        let lo = a + quiet;
        if lo > b {
            continue;
        }
        if let Some(e) =
            trace.nonfaulty().find(|e| e.kind.is_emergency() && e.kind != EventKind::H && e.time >= lo && e.time <= b)
        {
            rep.peaceability.push(format!(
                "{} at node {} at {} inside all-happy interval [{}, {}]",
                e.kind,
                e.node,
                scale.fmt(e.time),
                scale.fmt(a),
                scale.fmt(b)
            ));
        }
    }

    let spread = scale.floor(&p.appearance_spread).0;
    let hs: Vec<(RefTime, usize)> =
        trace.nonfaulty().filter(|e| e.kind == EventKind::H).map(|e| (e.time, e.node)).collect();
    let covered = |t: RefTime| {
        hs.iter().filter(|(s, _)| s.0 <= t.0 && t.0 <= s.0 + spread).any(|(s, _)| {
            let who: BTreeSet<usize> =
                hs.iter().filter(|(x, _)| *x >= *s && x.0 <= s.0 + spread).map(|h| h.1).collect();
            nodes.iter().all(|n| who.contains(n))
        })
    };
    for &(t, node) in &hs {
        // Appearances too close to the horizon may have partners past it.
        if t.0 + spread > horizon.0 {
            continue;
        }
        if !covered(t) {
            rep.good_luck.push(format!("H at node {node} at {} has no system-wide cluster", scale.fmt(t)));
        }
    }

    let mut clusters: Vec<(RefTime, RefTime)> = Vec::new();
    for &(t, _) in &hs {
        match clusters.last_mut() {
            Some(c) if t.0 - c.1 .0 <= spread => c.1 = t,
            _ => clusters.push((t, t)),
        }
    }
    let lead = ticks(&p.separation_lead);
    let gap = ticks(&p.separation_gap);
    for (k, &(_, end)) in clusters.iter().enumerate() {
        let later: Vec<RefTime> = clusters[k + 1..].iter().flat_map(|c| [c.0, c.1]).collect();
        // Earliest H-free stretch starts at `end` or right after a later H.
        let starts = std::iter::once(end).chain(clusters[k + 1..].iter().map(|c| c.1));
        let ok = starts.take_while(|u| *u <= end + lead).any(|u| {
            let stop = u + gap;
            stop > horizon || !later.iter().any(|x| *x > u && *x < stop)
        });
        if !ok {
            rep.separation.push(format!("no H-free window after the cluster ending at {}", scale.fmt(end)));
        }
    }
    rep.clusters = clusters;
    rep
}

/// Post-stabilization message usage of one nonfaulty node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeAudit {
    pub node: usize,
    pub pulses: usize,
    pub sends: usize,
    pub emergency_events: usize,
    pub alphabet: BTreeSet<MarkValue>,
    pub other_wires: usize,
}

impl NodeAudit {
    pub fn passed(&self) -> bool {
        self.sends == self.pulses
            && self.emergency_events == 0
            && self.other_wires == 0
            && self.alphabet.len() <= 3
            && !self.alphabet.contains(&MarkValue::BEST)
    }
}

/// Message usage per nonfaulty node from `from` to the end of the trace.
pub fn message_audit(trace: &Trace, from: RefTime) -> Vec<NodeAudit> {
    let nodes: Vec<usize> = (0..trace.meta.n).filter(|i| !trace.is_faulty(*i)).collect();
    nodes
        .into_iter()
        .map(|node| {
            let mut a =
                NodeAudit { node, pulses: 0, sends: 0, emergency_events: 0, alphabet: BTreeSet::new(), other_wires: 0 };
            for e in trace.events.iter().filter(|e| e.node == node && e.time >= from) {
                match (&e.kind, &e.payload) {
                    (EventKind::P, _) => a.pulses += 1,
                    (EventKind::S, Payload::Send(Wire::Mark(v))) => {
                        a.sends += 1;
                        a.alphabet.insert(*v);
                    }
                    (EventKind::S, _) => {
                        a.sends += 1;
                        a.other_wires += 1;
                    }
                    (k, _) if k.is_emergency() => a.emergency_events += 1,
                    _ => {}
                }
            }
            a
        })
        .collect()
}

/// Counter agreement per post-stabilization pulse cluster.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ClockReadout {
    /// Common counter per cluster; `None` where nodes disagree or one is missing.
    pub readings: Vec<Option<u32>>,
    /// Whether consecutive readings advance by one modulo the cycle count.
    pub cycling: bool,
}

impl ClockReadout {
    pub fn passed(&self) -> bool {
        self.cycling && self.readings.iter().all(|r| r.is_some())
    }
}

pub fn digital_clock_readout(trace: &Trace, p: &ParamSet, from: RefTime) -> ClockReadout {
    let scale = trace.scale();
    let nodes: Vec<usize> = (0..trace.meta.n).filter(|i| !trace.is_faulty(*i)).collect();
    let spread = scale.floor(&p.precision).0;
    let mut clusters: Vec<PulseCluster> =
        pulse_clusters(trace, split_gap(p, scale)).into_iter().filter(|c| c.start >= from).collect();
    // The last cluster may be cut by the horizon.
    if clusters.last().is_some_and(|c| c.end.0 + spread > trace.meta.horizon.0) {
        clusters.pop();
    }
    let readings: Vec<Option<u32>> = clusters.iter().map(|c| c.uniform_counter(&nodes)).collect();
    let cycling = readings.windows(2).all(|w| match (w[0], w[1]) {
        (Some(a), Some(b)) => b == (a + 1) % p.cycles,
        _ => false,
    });
    ClockReadout { readings, cycling }
}

/// Summary of a trace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyncReport {
    pub stabilization: Option<RefTime>,
    pub deadline: RefTime,
    /// Largest post-stabilization cluster width.
    pub precision: Option<u64>,
    pub widths: Vec<u64>,
    pub peaceful: bool,
    pub audit: Vec<NodeAudit>,
    pub clock: ClockReadout,
    pub emergency: EmergencyReport,
    pub convergence: ConvergenceReport,
}

impl SyncReport {
    pub fn stabilized_in_time(&self) -> bool {
        self.stabilization.is_some_and(|t| t <= self.deadline)
    }

    pub fn passed(&self) -> bool {
        self.stabilized_in_time()
            && self.peaceful
            && self.audit.iter().all(|a| a.passed())
            && self.clock.passed()
            && self.emergency.passed()
            && self.convergence.passed()
    }
}

/// Runs every analysis on a trace.
pub fn report(trace: &Trace, p: &ParamSet) -> SyncReport {
    let scale = trace.scale();
    let stabilization = stabilization_point(trace, p);
    let from = stabilization.unwrap_or(trace.meta.horizon);
    let widths: Vec<u64> =
        pulse_clusters(trace, split_gap(p, scale)).into_iter().filter(|c| c.start >= from).map(|c| c.width()).collect();
    let peaceful = stabilization.is_some() && !trace.nonfaulty().any(|e| e.kind.is_emergency() && e.time >= from);
    SyncReport {
        stabilization,
        deadline: scale.floor(&p.stabilization_deadline()),
        precision: widths.iter().copied().max(),
        widths,
        peaceful,
        audit: message_audit(trace, from),
        clock: digital_clock_readout(trace, p, from),
        emergency: emergency_properties(trace, p),
        convergence: convergence_series(trace, p),
    }
}
