//! Reference time, wrapping local tick counters and drifting clocks.

use crate::params::Rational;
use num_traits::ToPrimitive;
use std::fmt;
use std::ops::{Add, Sub};
use thiserror::Error;

/// Number of reference-time units in one tick unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TimeScale(u64);

impl TimeScale {
    pub const DEFAULT: TimeScale = TimeScale(1024);
    /// Finer grid used when clocks drift.
    pub const FINE: TimeScale = TimeScale(1 << 16);

    pub fn new(units_per_tick: u64) -> Option<Self> {
        (units_per_tick > 0).then_some(Self(units_per_tick))
    }

    pub fn units(self) -> u64 {
        self.0
    }

    /// Whole tick units as reference time.
    pub fn ticks(self, ticks: u64) -> RefTime {
        RefTime(ticks * self.0)
    }

    /// Smallest grid point not below the rational tick amount.
    pub fn ceil(self, r: &Rational) -> RefTime {
        let v = (*r * Rational::from_integer(self.0 as i128)).ceil().to_integer();
        RefTime(v.max(0) as u64)
    }

    /// Largest grid point not above the rational tick amount.
    pub fn floor(self, r: &Rational) -> RefTime {
        let v = (*r * Rational::from_integer(self.0 as i128)).floor().to_integer();
        RefTime(v.max(0) as u64)
    }

    /// Exact value as a rational in tick units.
    pub fn to_rational(self, t: RefTime) -> Rational {
        Rational::new(t.0 as i128, self.0 as i128)
    }

    /// Decimal rendering, exact whenever the scale is a product of 2s and 5s.
    pub fn fmt(self, t: RefTime) -> String {
        crate::params::fmt_rational(&self.to_rational(t))
    }

    /// Parses a decimal rendering produced by [`TimeScale::fmt`].
    pub fn parse(self, s: &str) -> Option<RefTime> {
        let r = crate::params::parse_rational(s)?;
        let v = r * Rational::from_integer(self.0 as i128);
        if !v.is_integer() || v < Rational::from_integer(0) {
            return None;
        }
        v.to_integer().to_u64().map(RefTime)
    }
}

impl Default for TimeScale {
    fn default() -> Self {
        Self::DEFAULT
    }
}

/// Point on the reference time line, counted in grid units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct RefTime(pub u64);

impl RefTime {
    pub const ZERO: RefTime = RefTime(0);

    pub fn saturating_sub(self, o: RefTime) -> RefTime {
        RefTime(self.0.saturating_sub(o.0))
    }
}

impl Add for RefTime {
    type Output = RefTime;
    fn add(self, o: RefTime) -> RefTime {
        RefTime(self.0 + o.0)
    }
}

impl Sub for RefTime {
    type Output = RefTime;
    fn sub(self, o: RefTime) -> RefTime {
        RefTime(self.0 - o.0)
    }
}

impl fmt::Display for RefTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}u", self.0)
    }
}

/// Reading of a wrapping tick counter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct LocalTime(pub u64);

impl fmt::Display for LocalTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Modular arithmetic on local times.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Ring {
    modulus: u64,
}

impl Ring {
    pub const fn new(modulus: u64) -> Self {
        assert!(modulus > 0, "clock modulus must be positive");
        Self { modulus }
    }

    pub fn modulus(self) -> u64 {
        self.modulus
    }

    pub fn wrap(self, v: u64) -> LocalTime {
        LocalTime(v % self.modulus)
    }

    /// `a ⊕ k`.
    pub fn add(self, a: LocalTime, k: u64) -> LocalTime {
        LocalTime(((a.0 as u128 + k as u128) % self.modulus as u128) as u64)
    }

    /// `a ⊖ k` for a plain tick count.
    pub fn back(self, a: LocalTime, k: u64) -> LocalTime {
        let k = k % self.modulus;
        LocalTime((a.0 % self.modulus + self.modulus - k) % self.modulus)
    }

    /// `a ⊖ b`: ticks from `b` forward to `a`.
    pub fn diff(self, a: LocalTime, b: LocalTime) -> u64 {
        (a.0 % self.modulus + self.modulus - b.0 % self.modulus) % self.modulus
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ClockError {
    #[error("unknown node {0}")]
    UnknownNode(usize),
    #[error("cycle length {len} outside [{min}, {max}] grid units")]
    CycleOutOfBounds { len: u64, min: u64, max: u64 },
}

/// How the length of each tick cycle evolves.
#[derive(Debug, Clone, PartialEq)]
pub enum DriftSchedule {
    /// Every cycle lasts `1/rate` tick units.
    Constant { rate: Rational },
    /// Rate oscillates between 1 and `1 + amplitude` with the given period in ticks.
    Sinusoidal { amplitude: Rational, period_ticks: u64, phase_ticks: u64 },
    /// Explicit cycle lengths in grid units, repeated cyclically.
    Table(Vec<u64>),
}

impl DriftSchedule {
    pub fn ideal() -> Self {
        DriftSchedule::Constant { rate: Rational::from_integer(1) }
    }
}

/// One node's drifting clock.
#[derive(Debug, Clone)]
pub struct ClockModel {
    pub node: usize,
    /// Counter reading before the first tick.
    pub offset: LocalTime,
    /// Instant of the first tick, in `(0, first cycle]`.
    pub first_tick: RefTime,
    pub schedule: DriftSchedule,
    scale: TimeScale,
    min_len: u64,
    times: Vec<RefTime>,
}

impl ClockModel {
    /// `rate_bound` is the largest admissible tick rate; realized cycles are
    /// clamped into `[ceil(unit/rate_bound), unit]`.
    pub fn new(
        node: usize,
        offset: LocalTime,
        first_tick: RefTime,
        schedule: DriftSchedule,
        scale: TimeScale,
        rate_bound: Rational,
    ) -> Self {
        let min_len = scale.ceil(&(Rational::from_integer(1) / rate_bound)).0.max(1);
        Self { node, offset, first_tick, schedule, scale, min_len, times: Vec::new() }
    }

    pub fn scale(&self) -> TimeScale {
        self.scale
    }

    /// Length of cycle `k` (from tick `k` to tick `k+1`) in grid units.
    pub fn cycle_len(&self, k: u64) -> u64 {
        let unit = self.scale.units();
        let raw = match &self.schedule {
            DriftSchedule::Constant { rate } => self.scale.ceil(&(Rational::from_integer(1) / *rate)).0,
            DriftSchedule::Sinusoidal { amplitude, period_ticks, phase_ticks } => {
                let p = (*period_ticks).max(1);
                let x = ((k + phase_ticks) % p) as f64 / p as f64;
                let amp = amplitude.to_f64().unwrap_or(0.0);
                let rate = 1.0 + amp * 0.5 * (1.0 + (std::f64::consts::TAU * x).sin());
                (unit as f64 / rate).ceil() as u64
            }
            DriftSchedule::Table(v) if !v.is_empty() => v[(k % v.len() as u64) as usize],
            DriftSchedule::Table(_) => unit,
        };
        raw.clamp(self.min_len, unit)
    }

    /// Instant of tick number `k` (0-based).
    pub fn tick_time(&mut self, k: u64) -> RefTime {
        let k = k as usize;
        if self.times.is_empty() {
            self.times.push(self.first_tick);
        }
        while self.times.len() <= k {
            let i = self.times.len() as u64 - 1;
            let next = *self.times.last().unwrap() + RefTime(self.cycle_len(i));
            self.times.push(next);
        }
        self.times[k]
    }

    /// Number of ticks in `[0, t]`.
    pub fn ticks_until(&mut self, t: RefTime) -> u64 {
        if t < self.first_tick {
            return 0;
        }
        let mut hi = 1u64;
        while self.tick_time(hi) <= t {
            hi *= 2;
        }
        let n = self.times.len().min(hi as usize + 1);
        self.times[..n].partition_point(|&x| x <= t) as u64
    }

    /// Counter reading at `t` under the given modulus.
    pub fn local_time_at(&mut self, t: RefTime, ring: Ring) -> LocalTime {
        ring.add(self.offset, self.ticks_until(t))
    }
}

/// A set of clocks addressable by node id.
#[derive(Debug, Clone, Default)]
pub struct Clocks {
    pub clocks: Vec<ClockModel>,
}

impl Clocks {
    pub fn local_time_at(&mut self, node: usize, t: RefTime, ring: Ring) -> Result<LocalTime, ClockError> {
        self.clocks.get_mut(node).map(|c| c.local_time_at(t, ring)).ok_or(ClockError::UnknownNode(node))
    }
}
