//! Timing constants and their validity ledger.
//!
//! Every value is an exact rational in tick units. Integer views used by the
//! node automata are derived with [`Rational::ceil`]/[`Rational::floor`] at the
//! call sites that need them.

use num_rational::Ratio;
use num_traits::{One, Signed, ToPrimitive, Zero};
use std::fmt;
use thiserror::Error;

/// Exact rational in tick units.
pub type Rational = Ratio<i128>;

/// Parses `"3"`, `"0.0001"`, `"1/1024"` or `"1e-4"` into an exact rational.
pub fn parse_rational(s: &str) -> Option<Rational> {
    let s = s.trim();
    if let Some((a, b)) = s.split_once('/') {
        let a: i128 = a.trim().parse().ok()?;
        let b: i128 = b.trim().parse().ok()?;
        if b == 0 {
            return None;
        }
        return Some(Rational::new(a, b));
    }
    let (mantissa, exp) = match s.split_once(['e', 'E']) {
        Some((m, e)) => (m, e.parse::<i32>().ok()?),
        None => (s, 0),
    };
    let neg = mantissa.starts_with('-');
    let mantissa = mantissa.trim_start_matches(['-', '+']);
    let (int, frac) = mantissa.split_once('.').unwrap_or((mantissa, ""));
    if int.is_empty() && frac.is_empty() {
        return None;
    }
    let digits = format!("{int}{frac}");
    if !digits.chars().all(|c| c.is_ascii_digit()) {
        return None;
    }
    let mut num: i128 = digits.parse().ok()?;
    if neg {
        num = -num;
    }
    let scale = exp - frac.len() as i32;
    let ten = Rational::from_integer(10);
    let mut r = Rational::from_integer(num);
    if scale >= 0 {
        r *= num_traits::pow(ten, scale as usize);
    } else {
        r /= num_traits::pow(ten, (-scale) as usize);
    }
    Some(r)
}

/// Formats a rational as a decimal string (exact when the denominator is a
/// product of 2s and 5s, otherwise 9 fractional digits).
pub fn fmt_rational(r: &Rational) -> String {
    if r.is_integer() {
        return r.numer().to_string();
    }
    let neg = r.is_negative();
    let a = r.abs();
    let int = a.trunc().to_integer();
    let mut frac = a.fract();
    let mut out = String::new();
    for _ in 0..12 {
        if frac.is_zero() {
            break;
        }
        frac *= Rational::from_integer(10);
        let digit = frac.trunc().to_integer();
        out.push(char::from(b'0' + digit as u8));
        frac = frac.fract();
    }
    format!("{}{}.{}", if neg { "-" } else { "" }, int, out)
}

/// Smallest integer not below `r`.
pub fn ceil_int(r: &Rational) -> i128 {
    r.ceil().to_integer()
}

/// Largest integer not above `r`.
pub fn floor_int(r: &Rational) -> i128 {
    r.floor().to_integer()
}

/// Which spread to assume between nonfaulty appearance events.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AppearanceSpread {
    /// Round spread plus one round wait (works for any terminating agreement).
    #[default]
    General,
    /// Round spread alone (the fixed-round agreement terminates simultaneously).
    Simple,
}

/// Inputs to [`solve`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamInputs {
    pub delay: Rational,
    pub drift: Rational,
    pub n: usize,
    pub f: usize,
    pub precision: Rational,
    /// Absorption cycles; defaults to the smallest legal value.
    pub cycles: Option<u32>,
    /// Agreement rounds; defaults to three per phase with f+1 phases.
    pub ba_rounds: Option<u32>,
    /// Pulse period override; defaults to the smallest admissible integer.
    pub period: Option<Rational>,
    pub appearance: AppearanceSpread,
    /// Largest drift accepted.
    pub max_drift: Rational,
}

impl ParamInputs {
    pub fn new(delay: i128, drift: Rational, n: usize, f: usize, precision: i128) -> Self {
        Self {
            delay: Rational::from_integer(delay),
            drift,
            n,
            f,
            precision: Rational::from_integer(precision),
            cycles: None,
            ba_rounds: None,
            period: None,
            appearance: AppearanceSpread::General,
            max_drift: Rational::new(1, 100),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParamError {
    #[error("need n > 3f (n={n}, f={f})")]
    TooManyFaults { n: usize, f: usize },
    #[error("delay must be positive")]
    NonPositiveDelay,
    #[error("drift {0} outside [0, {1}]")]
    DriftOutOfRange(String, String),
    #[error("period iteration did not converge; drift too large")]
    NonConvergence,
    #[error("precision {precision} must exceed {needed}")]
    PrecisionTooSmall { precision: String, needed: String },
    #[error("absorption cycles {0} must exceed the goodness cycle {1}")]
    TooFewCycles(u32, u32),
    #[error("drift denominator {0} exceeds 10000; use a coarser drift value")]
    DriftResolution(i128),
    #[error("agreement rounds must be positive")]
    NoRounds,
}

/// Every derived timing constant, in ticks.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    pub delay: Rational,
    pub drift: Rational,
    pub rate_bound: Rational,
    pub n: usize,
    pub f: usize,
    pub precision: Rational,
    pub precision_window: Rational,
    pub engage_spread: Rational,
    pub engage_window: Rational,
    pub engage_horizon: Rational,
    pub engage_wait: Rational,
    pub settle_wait: Rational,
    pub coarse_spread: Rational,
    pub absorb_wait: Rational,
    pub halvings: u32,
    pub good_from: u32,
    pub cycles: u32,
    pub good_spread: Rational,
    pub accuracy: Rational,
    pub period: Rational,
    pub period_min: Rational,
    pub period_max: Rational,
    pub fta_offset: Rational,
    pub absorption_span: Rational,
    pub accept_spread: Rational,
    pub round_spread: Rational,
    pub round_wait: Rational,
    pub ba_rounds: u32,
    pub ba_span: Rational,
    pub emergency_span: Rational,
    pub appearance: AppearanceSpread,
    pub appearance_spread: Rational,
    pub blanking: Rational,
    pub agreement_window: Rational,
    pub removal_window: Rational,
    pub initiator_timeout: Rational,
    pub accept_stabilization: Rational,
    pub quiet_after_happy: Rational,
    pub separation_lead: Rational,
    pub separation_gap: Rational,
    pub relax_timeout: Rational,
    pub liveness_window: Rational,
    pub convergence_bound: Rational,
    pub stabilization_bound: Rational,
    pub happy_window: Rational,
    pub shortcut_window: Rational,
    pub absorb_window: Rational,
    pub engage_adjust_window: Rational,
    pub observation_window: Rational,
    pub max_drift: Rational,
}

fn int(v: i128) -> Rational {
    Rational::from_integer(v)
}

/// Smallest k with 2^k >= x, for x > 0.
fn ceil_log2(x: &Rational) -> i32 {
    let mut k = 0i32;
    let two = int(2);
    if *x > Rational::one() {
        let mut p = Rational::one();
        while p < *x {
            p *= two;
            k += 1;
        }
    } else {
        let mut p = Rational::one();
        while p / two >= *x {
            p /= two;
            k -= 1;
        }
    }
    k
}

struct Core {
    engage_spread: Rational,
    engage_window: Rational,
    engage_horizon: Rational,
    engage_wait: Rational,
    settle_wait: Rational,
}

fn period_bounds(i: &ParamInputs, c: &Core, theta: Rational, period: Rational) -> [Rational; 4] {
    let d = i.delay;
    let rho = i.drift;
    let drift_term = rho * period / theta;
    let coarse = int(3) * c.engage_spread + c.engage_horizon + c.engage_wait + int(5) * d + drift_term;
    let absorb_wait = theta * (coarse + d);
    let one_minus = Rational::one() - rho;
    let main = theta * (int(3) * absorb_wait + coarse + int(9) * d) / one_minus;
    let spread_i = int(2) * c.engage_spread + c.engage_horizon + int(3) * d + rho * c.engage_wait / theta;
    let engage_period =
        (absorb_wait + c.engage_wait + c.engage_window + theta * (spread_i + int(2) * absorb_wait + int(9) * d))
            / one_minus;
    let t0a = (absorb_wait
        + theta * (int(3) * c.engage_spread + c.engage_horizon + int(2) * absorb_wait + c.engage_wait + int(13) * d))
        / one_minus;
    let t1 = (absorb_wait + theta * (coarse + int(2) * absorb_wait + int(9) * d)) / one_minus;
    [main, engage_period, t0a, t1]
}

/// Derives every constant from the inputs.
pub fn solve(i: &ParamInputs) -> Result<ParamSet, ParamError> {
    if i.n <= 3 * i.f {
        return Err(ParamError::TooManyFaults { n: i.n, f: i.f });
    }
    if i.delay <= Rational::zero() {
        return Err(ParamError::NonPositiveDelay);
    }
    if i.drift.is_negative() || i.drift > i.max_drift {
        return Err(ParamError::DriftOutOfRange(fmt_rational(&i.drift), fmt_rational(&i.max_drift)));
    }
    if *i.drift.denom() > 10_000 || *i.delay.denom() > 10_000 || *i.precision.denom() > 10_000 {
        return Err(ParamError::DriftResolution(*i.drift.denom().max(i.delay.denom()).max(i.precision.denom())));
    }
    let d = i.delay;
    let rho = i.drift;
    let theta = Rational::one() + rho;
    let precision_window = theta * (i.precision + d);
    let engage_spread = precision_window + d;
    let engage_window = theta * (engage_spread + d);
    let engage_horizon = engage_window + d;
    let core =
        Core { engage_spread, engage_window, engage_horizon, engage_wait: precision_window, settle_wait: theta * d };

    let period = match i.period {
        Some(p) => p,
        None => {
            let mut p = Rational::zero();
            let mut done = false;
            for _ in 0..10_000 {
                let need = period_bounds(i, &core, theta, p).iter().map(|b| int(ceil_int(b))).max().unwrap();
                if need <= p {
                    done = true;
                    break;
                }
                p = need;
            }
            if !done {
                return Err(ParamError::NonConvergence);
            }
            p
        }
    };

    let drift_term = rho * period / theta;
    let coarse_spread = int(3) * engage_spread + engage_horizon + core.engage_wait + int(5) * d + drift_term;
    let absorb_wait = theta * (coarse_spread + d);
    let margin = i.precision - int(2) * (d + drift_term);
    if margin <= Rational::zero() {
        return Err(ParamError::PrecisionTooSmall {
            precision: fmt_rational(&i.precision),
            needed: fmt_rational(&(int(2) * (d + drift_term))),
        });
    }
    let halvings = (1 + ceil_log2(&(coarse_spread / margin))).max(1) as u32;
    let good_from = halvings + 1;
    let cycles = i.cycles.unwrap_or(good_from + 1);
    let good_spread = coarse_spread / num_traits::pow(int(2), (good_from - 2) as usize) + int(2) * (d + drift_term);
    let accuracy = rho * period + theta * (good_spread + int(2) * d);
    let period_min = period / theta - int(2) * i.precision;
    let period_max = period + int(2) * i.precision;
    let fta_offset = int(2) * absorb_wait + int(3) * theta * d;
    let absorption_span = coarse_spread + int(cycles as i128) * (period + d) + i.precision + d;

    let ba_rounds = i.ba_rounds.unwrap_or(3 * (i.f as u32 + 1));
    if ba_rounds == 0 {
        return Err(ParamError::NoRounds);
    }
    let accept_spread = int(3) * d;
    let denom = Rational::one() - int(2) * rho * theta * int(ba_rounds as i128 + 1);
    if denom <= Rational::zero() {
        return Err(ParamError::NonConvergence);
    }
    let round_spread = (accept_spread + d) / denom;
    let round_wait = int(2) * theta * round_spread;
    let ba_span = int(ba_rounds as i128 + 1) * round_wait;
    let emergency_span = ba_span + int(4) * theta * d;
    let appearance_spread = match i.appearance {
        AppearanceSpread::General => round_spread + round_wait,
        AppearanceSpread::Simple => round_spread,
    };
    let blanking = theta * (appearance_spread + d);
    let agreement_window = ba_span;
    let removal_window = agreement_window + int(13) * d;
    let initiator_timeout = int(2) * removal_window + int(15) * d;
    let accept_stabilization = int(2) * (int(20) * d + int(4) * removal_window);
    let quiet_after_happy = initiator_timeout + ba_span + int(2) * d;
    let separation_lead = appearance_spread + initiator_timeout + ba_span + d;
    let separation_gap = absorption_span;
    let relax_timeout = theta * (separation_lead + separation_gap + appearance_spread + d);
    let happy_window = int(2) * precision_window + theta * absorption_span;
    let liveness_window = happy_window.max(relax_timeout) + initiator_timeout + ba_span + int(7) * d;
    let convergence_bound = accept_stabilization + relax_timeout + absorption_span;
    let stabilization_bound = absorption_span
        + liveness_window
        + quiet_after_happy
        + separation_lead
        + separation_gap
        + engage_horizon
        + i.precision
        + d;
    let shortcut_window = precision_window + period + accuracy;
    let absorb_window = int(2) * absorb_wait + int(2) * theta * d;
    let engage_adjust_window = core.engage_wait + engage_window + int(2) * theta * d;
    let observation_window =
        theta * happy_window + core.engage_wait + engage_window + int(2) * theta * d + int(8) * theta * d;

    let set = ParamSet {
        delay: d,
        drift: rho,
        rate_bound: theta,
        n: i.n,
        f: i.f,
        precision: i.precision,
        precision_window,
        engage_spread,
        engage_window,
        engage_horizon,
        engage_wait: core.engage_wait,
        settle_wait: core.settle_wait,
        coarse_spread,
        absorb_wait,
        halvings,
        good_from,
        cycles,
        good_spread,
        accuracy,
        period,
        period_min,
        period_max,
        fta_offset,
        absorption_span,
        accept_spread,
        round_spread,
        round_wait,
        ba_rounds,
        ba_span,
        emergency_span,
        appearance: i.appearance,
        appearance_spread,
        blanking,
        agreement_window,
        removal_window,
        initiator_timeout,
        accept_stabilization,
        quiet_after_happy,
        separation_lead,
        separation_gap,
        relax_timeout,
        liveness_window,
        convergence_bound,
        stabilization_bound,
        happy_window,
        shortcut_window,
        absorb_window,
        engage_adjust_window,
        observation_window,
        max_drift: i.max_drift,
    };
    if cycles <= good_from {
        return Err(ParamError::TooFewCycles(cycles, good_from));
    }
    Ok(set)
}

/// One named inequality of the validity ledger.
#[derive(Debug, Clone, PartialEq)]
pub struct LedgerEntry {
    pub name: &'static str,
    pub lhs: Rational,
    pub rhs: Rational,
    /// `lhs > rhs` when strict, else `lhs >= rhs`.
    pub strict: bool,
    /// Advisory entries are reported but do not block use.
    pub gating: bool,
    pub pass: bool,
}

fn entry(name: &'static str, lhs: Rational, rhs: Rational, strict: bool, gating: bool) -> LedgerEntry {
    let pass = if strict { lhs > rhs } else { lhs >= rhs };
    LedgerEntry { name, lhs, rhs, strict, gating, pass }
}

impl ParamSet {
    /// Sum bounding the stabilization instant.
    pub fn stabilization_deadline(&self) -> Rational {
        self.convergence_bound + self.stabilization_bound
    }

    /// Default run length: the deadline, ten full clock cycles after it and two spare periods.
    pub fn horizon_default(&self) -> Rational {
        self.stabilization_deadline() + int(10 * self.cycles as i128) * self.period + int(2) * self.period
    }

    /// True iff every gating ledger entry passes.
    pub fn is_valid(&self) -> bool {
        validate(self).iter().all(|e| e.pass || !e.gating)
    }

    /// Integer local-tick view of a rational duration used as a wait.
    pub fn wait_ticks(r: &Rational) -> u64 {
        ceil_int(r).max(0) as u64
    }

    /// Integer local-tick view of a rational duration used as a window bound.
    pub fn window_ticks(r: &Rational) -> u64 {
        floor_int(r).max(0) as u64
    }

    /// Default local clock modulus.
    pub fn default_clock_modulus(&self) -> u64 {
        let need = int(16) * self.rate_bound * self.observation_window.max(int(self.cycles as i128) * self.period);
        let need = ceil_int(&need).max(1) as u64;
        need.next_power_of_two()
    }

    /// Stable key/value listing for display and machine-readable output.
    pub fn rows(&self) -> Vec<(&'static str, String)> {
        let r = fmt_rational;
        vec![
            ("n", self.n.to_string()),
            ("f", self.f.to_string()),
            ("delay", r(&self.delay)),
            ("drift", r(&self.drift)),
            ("rate_bound", r(&self.rate_bound)),
            ("precision", r(&self.precision)),
            ("precision_window", r(&self.precision_window)),
            ("engage_spread", r(&self.engage_spread)),
            ("engage_window", r(&self.engage_window)),
            ("engage_horizon", r(&self.engage_horizon)),
            ("engage_wait", r(&self.engage_wait)),
            ("settle_wait", r(&self.settle_wait)),
            ("coarse_spread", r(&self.coarse_spread)),
            ("absorb_wait", r(&self.absorb_wait)),
            ("period", r(&self.period)),
            ("period_min", r(&self.period_min)),
            ("period_max", r(&self.period_max)),
            ("halvings", self.halvings.to_string()),
            ("good_from", self.good_from.to_string()),
            ("cycles", self.cycles.to_string()),
            ("good_spread", r(&self.good_spread)),
            ("accuracy", r(&self.accuracy)),
            ("fta_offset", r(&self.fta_offset)),
            ("absorption_span", r(&self.absorption_span)),
            ("accept_spread", r(&self.accept_spread)),
            ("round_spread", r(&self.round_spread)),
            ("round_wait", r(&self.round_wait)),
            ("ba_rounds", self.ba_rounds.to_string()),
            ("ba_span", r(&self.ba_span)),
            ("emergency_span", r(&self.emergency_span)),
            ("appearance_spread", r(&self.appearance_spread)),
            ("blanking", r(&self.blanking)),
            ("agreement_window", r(&self.agreement_window)),
            ("removal_window", r(&self.removal_window)),
            ("initiator_timeout", r(&self.initiator_timeout)),
            ("accept_stabilization", r(&self.accept_stabilization)),
            ("quiet_after_happy", r(&self.quiet_after_happy)),
            ("separation_lead", r(&self.separation_lead)),
            ("separation_gap", r(&self.separation_gap)),
            ("relax_timeout", r(&self.relax_timeout)),
            ("liveness_window", r(&self.liveness_window)),
            ("convergence_bound", r(&self.convergence_bound)),
            ("stabilization_bound", r(&self.stabilization_bound)),
            ("stabilization_deadline", r(&self.stabilization_deadline())),
            ("happy_window", r(&self.happy_window)),
            ("shortcut_window", r(&self.shortcut_window)),
            ("absorb_window", r(&self.absorb_window)),
            ("engage_adjust_window", r(&self.engage_adjust_window)),
            ("observation_window", r(&self.observation_window)),
            ("clock_modulus", self.default_clock_modulus().to_string()),
        ]
    }

    /// Hex digest of the stable listing.
    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        for (k, v) in self.rows() {
            h.update(k.as_bytes());
            h.update(b"=");
            h.update(v.as_bytes());
            h.update(b"\n");
        }
        hex::encode(&h.finalize()[..8])
    }
}

/// Evaluates every named inequality.
pub fn validate(p: &ParamSet) -> Vec<LedgerEntry> {
    let d = p.delay;
    let rho = p.drift;
    let theta = p.rate_bound;
    let t = p.period;
    let drift_term = rho * t / theta;
    let one_minus = Rational::one() - rho;
    let spread_i = int(2) * p.engage_spread + p.engage_horizon + int(3) * d + rho * p.engage_wait / theta;
    let engage_period =
        (p.absorb_wait + p.engage_wait + p.engage_window + theta * (spread_i + int(2) * p.absorb_wait + int(9) * d))
            / one_minus;
    let t0a = (p.absorb_wait
        + theta * (int(3) * p.engage_spread + p.engage_horizon + int(2) * p.absorb_wait + p.engage_wait + int(13) * d))
        / one_minus;
    let t0b = theta
        * (int(3) * p.engage_spread
            + int(2) * p.engage_horizon
            + p.engage_wait
            + p.settle_wait
            + p.accuracy
            + int(5) * d);
    let t1 = (p.absorb_wait + theta * (p.coarse_spread + int(2) * p.absorb_wait + int(9) * d)) / one_minus;
    let main = theta * (int(3) * p.absorb_wait + p.coarse_spread + int(9) * d) / one_minus;
    let halving_need = int(p.halvings as i128 + 1);
    let sync_gap = p.period_min;
    vec![
        entry("precision exceeds twice delay plus drift", p.precision, int(2) * (d + drift_term), true, true),
        entry("engage wait covers precision window", p.engage_wait, p.precision_window, false, true),
        entry("settle wait covers one delay", p.settle_wait, theta * d, false, true),
        entry("period covers default bound", t, main, false, true),
        entry("period covers coordinated engagement", t, engage_period, false, true),
        entry("period covers happy coordination (a)", t, t0a, false, true),
        entry("period covers happy coordination (b)", t, t0b, false, true),
        entry("period covers absorption round", t, t1, false, true),
        entry("cycles cover halvings", int(p.cycles as i128), halving_need, false, true),
        entry("cycles exceed goodness cycle", int(p.cycles as i128), int(p.good_from as i128), true, true),
        entry(
            "accuracy covers good spread",
            p.accuracy,
            (p.good_spread + drift_term).max(rho * t + theta * (p.good_spread + d)) + theta * d,
            false,
            true,
        ),
        entry(
            "round wait covers round skew",
            p.round_wait,
            int(2) * theta * (rho * p.ba_span + p.accept_spread + d),
            false,
            true,
        ),
        entry(
            "relax timeout covers separation",
            p.relax_timeout,
            theta * (p.separation_lead + p.separation_gap + p.appearance_spread + d),
            false,
            true,
        ),
        entry("coarse spread fits absorb wait", p.absorb_wait / theta - d, p.coarse_spread, false, true),
        entry("sync gap exceeds three precisions", sync_gap, int(3) * p.precision, true, true),
        entry(
            "clock modulus exceeds observation window",
            int(p.default_clock_modulus() as i128),
            p.observation_window,
            true,
            true,
        ),
        entry(
            "happy window covers cycle span",
            theta * p.absorption_span,
            theta * (int(p.cycles as i128) * p.period_max + d),
            false,
            false,
        ),
    ]
}

impl fmt::Display for LedgerEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<46} {:>14} {} {:<14} {}{}",
            self.name,
            fmt_rational(&self.lhs),
            if self.strict { ">" } else { ">=" },
            fmt_rational(&self.rhs),
            if self.pass { "pass" } else { "FAIL" },
            if self.gating { "" } else { " (advisory)" }
        )
    }
}

/// Integer ticks of a nonnegative rational as `u64`, rounding up.
pub fn to_ticks_ceil(r: &Rational) -> u64 {
    ceil_int(r).max(0).to_u64().unwrap_or(u64::MAX)
}

impl Default for ParamInputs {
    fn default() -> Self {
        ParamInputs::new(1, Rational::zero(), 4, 1, 3)
    }
}
