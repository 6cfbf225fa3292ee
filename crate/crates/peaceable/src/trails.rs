//! Local observation store: marks, filters, clusters and the alignment predicate.

use crate::network::MarkValue;
use crate::params::ParamSet;
use crate::time::{LocalTime, Ring};
use thiserror::Error;

/// One observed mark `(value, receipt tick, source)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Mark {
    pub value: MarkValue,
    pub tick: LocalTime,
    pub source: usize,
    /// Recording order, unique within a trail.
    pub seq: u64,
}

/// Value filters reducing a trail to `(tick, source)` pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Selector {
    /// Every mark.
    Any,
    /// Marks tagged GOOD.
    Good,
    /// Marks tagged both GOOD and BEST.
    GoodBest,
}

impl Selector {
    pub fn accepts(self, v: MarkValue) -> bool {
        match self {
            Selector::Any => true,
            Selector::Good => v.good(),
            Selector::GoodBest => v.good() && v.best(),
        }
    }
}

/// A mark reduced to its age (ticks before the observation point) and source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Point {
    pub age: u64,
    pub source: usize,
    pub seq: u64,
}

/// Marks retained within the observation window.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Trail {
    marks: Vec<Mark>,
    /// Remaining ticks during which nothing is recorded.
    blanking: u64,
    next_seq: u64,
}

impl Trail {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn marks(&self) -> &[Mark] {
        &self.marks
    }

    pub fn len(&self) -> usize {
        self.marks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.marks.is_empty()
    }

    pub fn is_blanking(&self) -> bool {
        self.blanking > 0
    }

    /// Appends a mark unless blanking; returns its sequence number if kept.
    pub fn record(&mut self, value: MarkValue, tick: LocalTime, source: usize) -> Option<u64> {
        if self.blanking > 0 {
            return None;
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.marks.push(Mark { value, tick, source, seq });
        Some(seq)
    }

    /// Sequence number the next recorded mark will get.
    pub fn next_seq(&self) -> u64 {
        self.next_seq
    }

    /// Drops marks older than `window` ticks at `now`.
    pub fn prune(&mut self, now: LocalTime, ring: Ring, window: u64) {
        self.marks.retain(|m| ring.diff(now, m.tick) <= window);
    }

    /// Clears every mark and suppresses recording for `ticks` ticks.
    pub fn clear_and_blank(&mut self, ticks: u64) {
        self.marks.clear();
        self.blanking = ticks;
    }

    /// Advances blanking by one tick.
    pub fn on_tick(&mut self) {
        self.blanking = self.blanking.saturating_sub(1);
    }

    /// Single-valued view `(tick, source)` of the marks passing `sel`.
    pub fn filter(&self, sel: Selector) -> Vec<(LocalTime, usize)> {
        self.marks.iter().filter(|m| sel.accepts(m.value)).map(|m| (m.tick, m.source)).collect()
    }

    /// Ages of marks passing `sel` that lie within the last `window` ticks, youngest first.
    pub fn points(&self, sel: Selector, now: LocalTime, ring: Ring, window: u64) -> Vec<Point> {
        let mut v: Vec<Point> = self
            .marks
            .iter()
            .filter(|m| sel.accepts(m.value))
            .map(|m| Point { age: ring.diff(now, m.tick), source: m.source, seq: m.seq })
            .filter(|p| p.age <= window)
            .collect();
        v.sort();
        v
    }
}

/// A group of points from distinct sources spanning at most the requested width.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cluster {
    pub youngest: u64,
    pub oldest: u64,
    pub sources: Vec<usize>,
}

/// Finds a cluster of at least `width` distinct sources within `spread` ticks for
/// which `accept` holds. `points` must be sorted by age.
pub fn find_cluster(
    points: &[Point],
    spread: u64,
    width: usize,
    mut accept: impl FnMut(&[Point]) -> bool,
) -> Option<Cluster> {
    if width == 0 {
        return Some(Cluster { youngest: 0, oldest: 0, sources: vec![] });
    }
    let mut end = 0;
    for start in 0..points.len() {
        let lo = points[start].age;
        end = end.max(start);
        while end < points.len() && points[end].age - lo <= spread {
            end += 1;
        }
        let window = &points[start..end];
        let mut sources: Vec<usize> = window.iter().map(|p| p.source).collect();
        sources.sort_unstable();
        sources.dedup();
        if sources.len() >= width && accept(window) {
            return Some(Cluster { youngest: lo, oldest: window.last().unwrap().age, sources });
        }
    }
    None
}

fn fresh(window: &[Point], since: Option<u64>) -> bool {
    since.is_none_or(|s| window.iter().any(|p| p.seq >= s))
}

/// Result of classifying a trail.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Flags {
    pub good: bool,
    pub shortcut: bool,
    pub happy: bool,
    pub engaging: bool,
}

/// Integer tick thresholds used by the classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Thresholds {
    pub n: usize,
    pub f: usize,
    pub gap_min: u64,
    pub gap_max: u64,
    pub precision_window: u64,
    pub engage_window: u64,
    pub shortcut_window: u64,
    pub happy_window: u64,
    pub observation_window: u64,
}

impl Thresholds {
    pub fn from_params(p: &ParamSet) -> Self {
        let w = ParamSet::window_ticks;
        Self {
            n: p.n,
            f: p.f,
            gap_min: ParamSet::wait_ticks(&(p.period - p.accuracy)),
            gap_max: w(&(p.period + p.accuracy)),
            precision_window: w(&p.precision_window),
            engage_window: w(&p.engage_window),
            shortcut_window: w(&p.shortcut_window),
            happy_window: w(&p.happy_window),
            observation_window: w(&p.observation_window),
        }
    }

    /// Own inter-pulse gap inside the accuracy band.
    pub fn is_good_gap(&self, gap: u64) -> bool {
        (self.gap_min..=self.gap_max).contains(&gap)
    }

    /// Enough GOOD marks, own included, within the precision window.
    pub fn shortcut(&self, trail: &Trail, own: usize, now: LocalTime, ring: Ring) -> bool {
        let pts = trail.points(Selector::Good, now, ring, self.shortcut_window);
        find_cluster(&pts, self.precision_window, self.n - self.f, |w| w.iter().any(|p| p.source == own)).is_some()
    }

    /// Enough GOOD+BEST marks within the precision window, looking back
    /// `window` ticks; with `since`, the cluster must hold a mark numbered at least `since`.
    pub fn happy_within(&self, trail: &Trail, now: LocalTime, ring: Ring, window: u64, since: Option<u64>) -> bool {
        let pts = trail.points(Selector::GoodBest, now, ring, window);
        find_cluster(&pts, self.precision_window, self.n - self.f, |w| fresh(w, since)).is_some()
    }

    pub fn happy(&self, trail: &Trail, now: LocalTime, ring: Ring) -> bool {
        self.happy_within(trail, now, ring, self.happy_window, None)
    }

    /// GOOD+BEST cluster of `n−2f` sources within the engagement window; with
    /// `since`, it must hold a mark numbered at least `since`.
    pub fn engaging(&self, trail: &Trail, now: LocalTime, ring: Ring, since: Option<u64>) -> bool {
        let pts = trail.points(Selector::GoodBest, now, ring, self.observation_window);
        find_cluster(&pts, self.engage_window, self.n - 2 * self.f, |w| fresh(w, since)).is_some()
    }

    /// All four flags; `gap` is the distance between the two latest own pulses.
    pub fn classify(&self, trail: &Trail, own: usize, now: LocalTime, ring: Ring, gap: Option<u64>) -> Flags {
        Flags {
            good: gap.is_some_and(|g| self.is_good_gap(g)),
            shortcut: self.shortcut(trail, own, now, ring),
            happy: self.happy(trail, now, ring),
            engaging: self.engaging(trail, now, ring, None),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AlignError {
    #[error("lower spacing {lower} must exceed three times the spread {spread}")]
    SpacingTooSmall { lower: i64, spread: i64 },
}

/// Sync/alignment predicate over per-participant sorted point lists.
///
/// Every point needs an interval of length at most `spread` containing it and a
/// point of every participant, no own successor closer than `lower`, and an own
/// successor within `[lower, upper]`. Points whose successor window ends after
/// `end` skip the successor clause; points later than `end − spread` skip the
/// interval clause.
pub fn aligned_points(points: &[Vec<i64>], spread: i64, lower: i64, upper: i64, end: i64) -> Result<bool, AlignError> {
    if lower <= 3 * spread {
        return Err(AlignError::SpacingTooSmall { lower, spread });
    }
    let mut all: Vec<i64> = points.iter().flatten().copied().collect();
    all.sort_unstable();
    let has_in = |xs: &[i64], lo: i64, hi: i64| {
        let i = xs.partition_point(|&x| x < lo);
        i < xs.len() && xs[i] <= hi
    };
    for xs in points {
        for (i, &t) in xs.iter().enumerate() {
            if t + spread <= end {
                let from = all.partition_point(|&x| x < t - spread);
                let covered = all[from..]
                    .iter()
                    .take_while(|&&a| a <= t)
                    .any(|&a| t <= a + spread && points.iter().all(|ys| has_in(ys, a, a + spread)));
                if !covered {
                    return Ok(false);
                }
            }
            let next = xs.get(i + 1).copied();
            if let Some(nx) = next {
                if nx < t + lower {
                    return Ok(false);
                }
            }
            if t + upper <= end && !next.is_some_and(|nx| nx <= t + upper) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Alignment of a trail under filter `sel`, with ticks read relative to `now`.
#[allow(clippy::too_many_arguments)]
pub fn is_aligned(
    trail: &Trail,
    sel: Selector,
    now: LocalTime,
    ring: Ring,
    window: u64,
    spread: i64,
    lower: i64,
    upper: i64,
) -> Result<bool, AlignError> {
    let pts = trail.points(sel, now, ring, window);
    let mut sources: Vec<usize> = pts.iter().map(|p| p.source).collect();
    sources.sort_unstable();
    sources.dedup();
    let base = window as i64;
    let mut lists: Vec<Vec<i64>> =
        sources.iter().map(|s| pts.iter().filter(|p| p.source == *s).map(|p| base - p.age as i64).collect()).collect();
    for l in &mut lists {
        l.sort_unstable();
    }
    if lists.is_empty() {
        return Ok(false);
    }
    let end = lists.iter().flatten().copied().max().unwrap_or(0);
    aligned_points(&lists, spread, lower, upper, end)
}
