//! Flat `key = value` scenario files.
//!
//! One key per line; `#` starts a comment. Unknown and repeated keys are errors;
//! optional keys take `auto`.
//!
//! ```text
//! n = 4
//! f = 1
//! rho = 1/10000
//! adversary = crash
//! crash_at = 900
//! init = adversarial-worst
//! ```

use crate::adversary::Strategy;
use crate::params::{fmt_rational, parse_rational, solve, validate, ParamError, ParamInputs, ParamSet, Rational};
use crate::sim::{DriftMode, InitMode, Scenario};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: `{key}` given twice")]
    Repeated { line: usize, key: String },
    #[error("bad value `{value}` for `{key}`")]
    BadValue { key: &'static str, value: String },
    #[error(transparent)]
    Params(#[from] ParamError),
    #[error("parameter ledger fails: {0}")]
    Ledger(String),
    #[error("horizon must be positive")]
    ZeroHorizon,
    #[error("horizon {have} ticks is below the {need} ticks needed; set allow_short_horizon = true to run anyway")]
    ShortHorizon { have: u64, need: u64 },
    #[error("faulty set {0:?} has more than f nodes or names an unknown node")]
    FaultySet(Vec<usize>),
}

/// Starting-state presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitPreset {
    Zeroed,
    UniformRandom,
    AdversarialWorst,
}

impl InitPreset {
    pub fn mode(self) -> InitMode {
        match self {
            InitPreset::Zeroed => InitMode::Clean,
            InitPreset::UniformRandom => InitMode::Arbitrary,
            InitPreset::AdversarialWorst => InitMode::Worst,
        }
    }
}

impl fmt::Display for InitPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InitPreset::Zeroed => "zeroed",
            InitPreset::UniformRandom => "uniform-random",
            InitPreset::AdversarialWorst => "adversarial-worst",
        })
    }
}

impl FromStr for InitPreset {
    type Err = ();
    fn from_str(s: &str) -> Result<Self, ()> {
        match s {
            "zeroed" => Ok(InitPreset::Zeroed),
            "uniform-random" => Ok(InitPreset::UniformRandom),
            "adversarial-worst" => Ok(InitPreset::AdversarialWorst),
            _ => Err(()),
        }
    }
}

fn drift_name(m: DriftMode) -> &'static str {
    match m {
        DriftMode::Ideal => "ideal",
        DriftMode::Constant => "constant",
        DriftMode::Sinusoidal => "sinusoidal",
        DriftMode::Extremes => "extremes",
    }
}

fn parse_drift_mode(s: &str) -> Option<DriftMode> {
    [DriftMode::Ideal, DriftMode::Constant, DriftMode::Sinusoidal, DriftMode::Extremes]
        .into_iter()
        .find(|m| drift_name(*m) == s)
}

/// Everything needed to reproduce a run, apart from the seed override.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub n: usize,
    pub f: usize,
    pub delay: Rational,
    pub drift: Rational,
    /// Target precision ε0 in ticks.
    pub precision: Rational,
    /// Absorption cycles per digital-clock period.
    pub cycles: Option<u32>,
    /// Agreement rounds.
    pub ba_rounds: Option<u32>,
    /// Local clock modulus in ticks.
    pub modulus: Option<u64>,
    /// Run length in ticks.
    pub horizon: Option<u64>,
    pub allow_short_horizon: bool,
    pub seed: u64,
    pub adversary: Strategy,
    /// Faulty nodes; the last `f` when absent.
    pub faulty: Option<Vec<usize>>,
    pub init: InitPreset,
    /// Drift pattern; sinusoidal when the drift is positive, ideal otherwise.
    pub drift_mode: Option<DriftMode>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            n: 4,
            f: 1,
            delay: Rational::from_integer(1),
            drift: Rational::from_integer(0),
            precision: Rational::from_integer(3),
            cycles: None,
            ba_rounds: None,
            modulus: None,
            horizon: None,
            allow_short_horizon: false,
            seed: 0,
            adversary: Strategy::Benign,
            faulty: None,
            init: InitPreset::UniformRandom,
            drift_mode: None,
        }
    }
}

const KEYS: [&str; 16] = [
    "n",
    "f",
    "d",
    "rho",
    "epsilon0",
    "cycles",
    "ba_rounds",
    "modulus",
    "horizon",
    "allow_short_horizon",
    "seed",
    "adversary",
    "crash_at",
    "faulty",
    "init",
    "drift_mode",
];

impl FromStr for ScenarioConfig {
    type Err = ConfigError;

    fn from_str(text: &str) -> Result<Self, ConfigError> {
        let mut c = ScenarioConfig::default();
        let mut seen: Vec<&str> = Vec::new();
        let mut crash_at = None;
        for (no, raw) in text.lines().enumerate() {
            let line = no + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let (k, v) = body.split_once('=').ok_or_else(|| ConfigError::Syntax { line, text: raw.to_string() })?;
            let (k, v) = (k.trim(), v.trim());
            let key =
                *KEYS.iter().find(|x| **x == k).ok_or_else(|| ConfigError::UnknownKey { line, key: k.to_string() })?;
            if seen.contains(&key) {
                return Err(ConfigError::Repeated { line, key: k.to_string() });
            }
            seen.push(key);
            let bad = || ConfigError::BadValue { key, value: v.to_string() };
            let auto = v == "auto";
            let int = || v.parse::<u64>().map_err(|_| bad());
            let rat = || parse_rational(v).ok_or_else(bad);
            match key {
                "n" => c.n = int()? as usize,
                "f" => c.f = int()? as usize,
                "d" => c.delay = rat()?,
                "rho" => c.drift = rat()?,
                "epsilon0" => c.precision = rat()?,
                "cycles" => c.cycles = if auto { None } else { Some(int()? as u32) },
                "ba_rounds" => c.ba_rounds = if auto { None } else { Some(int()? as u32) },
                "modulus" => c.modulus = if auto { None } else { Some(int()?) },
                "horizon" => c.horizon = if auto { None } else { Some(int()?) },
                "allow_short_horizon" => c.allow_short_horizon = v.parse().map_err(|_| bad())?,
                "seed" => c.seed = int()?,
                "adversary" => c.adversary = v.parse().map_err(|_| bad())?,
                "crash_at" => crash_at = Some(int()?),
                "faulty" if auto => c.faulty = None,
                "faulty" => {
                    c.faulty = Some(if v == "-" {
                        Vec::new()
                    } else {
                        v.split(',').map(|x| x.trim().parse().map_err(|_| bad())).collect::<Result<_, _>>()?
                    })
                }
                "init" => c.init = v.parse().map_err(|_| bad())?,
                "drift_mode" if auto => c.drift_mode = None,
                "drift_mode" => c.drift_mode = Some(parse_drift_mode(v).ok_or_else(bad)?),
                _ => unreachable!("key list and match arms agree"),
            }
        }
        if let Some(at_tick) = crash_at {
            match c.adversary {
                Strategy::Crash { .. } => c.adversary = Strategy::Crash { at_tick },
                _ => {
                    return Err(ConfigError::BadValue {
                        key: "crash_at",
                        value: format!("{at_tick} without adversary = crash"),
                    })
                }
            }
        }
        Ok(c)
    }
}

impl fmt::Display for ScenarioConfig {
    /// Canonical form: every key, fixed order, defaults spelled out.
    fn fmt(&self, out: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(out, "n = {}", self.n)?;
        writeln!(out, "f = {}", self.f)?;
        writeln!(out, "d = {}", fmt_rational(&self.delay))?;
        writeln!(out, "rho = {}", fmt_rational(&self.drift))?;
        writeln!(out, "epsilon0 = {}", fmt_rational(&self.precision))?;
        let opt = |x: Option<u64>| x.map_or("auto".to_string(), |v| v.to_string());
        writeln!(out, "cycles = {}", opt(self.cycles.map(u64::from)))?;
        writeln!(out, "ba_rounds = {}", opt(self.ba_rounds.map(u64::from)))?;
        writeln!(out, "modulus = {}", opt(self.modulus))?;
        writeln!(out, "horizon = {}", opt(self.horizon))?;
        writeln!(out, "allow_short_horizon = {}", self.allow_short_horizon)?;
        writeln!(out, "seed = {}", self.seed)?;
        writeln!(out, "adversary = {}", self.adversary)?;
        let faulty = match &self.faulty {
            None => "auto".to_string(),
            Some(v) if v.is_empty() => "-".to_string(),
            Some(v) => v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(","),
        };
        writeln!(out, "faulty = {faulty}")?;
        writeln!(out, "init = {}", self.init)?;
        writeln!(out, "drift_mode = {}", self.drift_mode.map_or("auto", drift_name))
    }
}

impl ScenarioConfig {
    /// Digest of the canonical form.
    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        hex::encode(&Sha256::digest(self.to_string().as_bytes())[..8])
    }

    pub fn inputs(&self) -> ParamInputs {
        let mut i = ParamInputs::new(1, self.drift, self.n, self.f, 3);
        i.delay = self.delay;
        i.precision = self.precision;
        i.cycles = self.cycles;
        i.ba_rounds = self.ba_rounds;
        i
    }

    /// Solved parameters; rejects sets whose gating ledger entries fail.
    pub fn params(&self) -> Result<ParamSet, ConfigError> {
        let p = solve(&self.inputs())?;
        let failing: Vec<&str> = validate(&p).iter().filter(|e| e.gating && !e.pass).map(|e| e.name).collect();
        if !failing.is_empty() {
            return Err(ConfigError::Ledger(failing.join(", ")));
        }
        Ok(p)
    }

    /// The scenario for `seed`, plus warnings worth showing the operator.
    pub fn scenario(&self, seed: u64) -> Result<(Scenario, Vec<String>), ConfigError> {
        let p = self.params()?;
        let mut warnings = Vec::new();
        let need = ParamSet::wait_ticks(
            &(p.stabilization_deadline() + Rational::from_integer(10 * p.cycles as i128) * p.period),
        );
        if let Some(h) = self.horizon {
            if h == 0 {
                return Err(ConfigError::ZeroHorizon);
            }
            if h < need {
                if !self.allow_short_horizon {
                    return Err(ConfigError::ShortHorizon { have: h, need });
                }
                warnings
                    .push(format!("horizon {h} ticks is below the {need} ticks needed for a stabilization verdict"));
            }
        }
        let faulty = self.faulty.clone().unwrap_or_else(|| (self.n - self.f..self.n).collect());
        if faulty.len() > self.f || faulty.iter().any(|x| *x >= self.n) {
            return Err(ConfigError::FaultySet(faulty));
        }
        let mut s = Scenario::new(p, seed);
        s.faulty = faulty;
        s.strategy = self.adversary;
        s.init = self.init.mode();
        s.drift = self.drift_mode.unwrap_or(if self.drift > Rational::from_integer(0) {
            DriftMode::Sinusoidal
        } else {
            DriftMode::Ideal
        });
        s.horizon_ticks = self.horizon;
        s.modulus = self.modulus;
        Ok((s, warnings))
    }
}
