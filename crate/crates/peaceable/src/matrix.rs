//! The standard scenario matrix and per-run verdicts.

use crate::adversary::Strategy;
use crate::checker::{is_synchronized, report, CheckError, PulseProcess, SyncBounds, SyncReport};
use crate::params::{fmt_rational, solve, ParamError, ParamInputs, ParamSet, Rational};
use crate::sim::{run, DriftMode, Scenario, SimError};
use crate::time::RefTime;
use crate::trace::Trace;
use thiserror::Error;

/// Seeds per (configuration, strategy) cell.
pub const SEEDS: u64 = 20;

#[derive(Debug, Error)]
pub enum MatrixError {
    #[error(transparent)]
    Params(#[from] ParamError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Check(#[from] CheckError),
}

/// System size and drift of one matrix row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Config {
    pub n: usize,
    pub f: usize,
    pub drift: Rational,
}

impl Config {
    pub fn params(&self) -> Result<ParamSet, ParamError> {
        solve(&ParamInputs::new(1, self.drift, self.n, self.f, 3))
    }
}

/// `n ∈ {4, 7}` with the largest `f`, and `ρ ∈ {0, 10⁻⁴}`.
pub fn configurations() -> Vec<Config> {
    let mut out = Vec::new();
    for drift in [Rational::from_integer(0), Rational::new(1, 10_000)] {
        for (n, f) in [(4, 1), (7, 2)] {
            out.push(Config { n, f, drift });
        }
    }
    out
}

/// Every built-in strategy; the crash instant depends on the seed.
pub fn strategies(seed: u64) -> Vec<Strategy> {
    vec![
        Strategy::Benign,
        Strategy::Crash { at_tick: 500 + 311 * seed },
        Strategy::RandomByzantine,
        Strategy::SplitWorld,
        Strategy::DelayMaximizer,
        Strategy::EngageSpammer,
    ]
}

/// Scenario for one cell: the last `f` nodes are faulty, drifting runs cycle
/// through the drift modes by seed.
pub fn scenario(params: ParamSet, strategy: Strategy, seed: u64) -> Scenario {
    let mut s = Scenario::new(params, seed);
    let n = s.params.n;
    s.faulty = (n - s.params.f..n).collect();
    s.strategy = strategy;
    if s.params.drift != Rational::from_integer(0) {
        s.drift = [DriftMode::Sinusoidal, DriftMode::Constant, DriftMode::Extremes][(seed % 3) as usize];
    }
    s
}

/// Per-criterion outcome of one run.
#[derive(Debug, Clone)]
pub struct Verdict {
    pub n: usize,
    pub f: usize,
    pub drift: String,
    pub strategy: String,
    pub seed: u64,
    pub report: SyncReport,
    /// Precision and period predicate on `[t*, horizon]` with the horizon long enough.
    pub synchronized: bool,
    pub horizon: RefTime,
    pub units: u64,
}

impl Verdict {
    pub fn in_time(&self) -> bool {
        self.report.stabilized_in_time()
    }

    pub fn contraction(&self) -> bool {
        self.report.convergence.passed()
    }

    pub fn audit(&self) -> bool {
        self.report.audit.iter().all(|a| a.passed())
    }

    pub fn emergency(&self) -> bool {
        self.report.emergency.passed()
    }

    pub fn passed(&self) -> bool {
        self.in_time()
            && self.synchronized
            && self.report.peaceful
            && self.contraction()
            && self.audit()
            && self.emergency()
    }

    /// Point-to-point messages per nonfaulty node and pulse after stabilization.
    pub fn messages_per_cycle(&self) -> Option<f64> {
        let pulses: usize = self.report.audit.iter().map(|a| a.pulses).sum();
        let sends: usize = self.report.audit.iter().map(|a| a.sends).sum();
        (pulses > 0).then(|| (sends * (self.n - 1)) as f64 / pulses as f64)
    }

    pub const CSV_HEADER: &'static str = "n,f,rho,strategy,seed,t_star,deadline,in_time,synchronized,peaceful,contraction,audit,emergency,precision,messages_per_cycle,passed";

    pub fn csv_row(&self) -> String {
        let fmt = |t: RefTime| format!("{:.4}", t.0 as f64 / self.units as f64);
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.n,
            self.f,
            self.drift,
            self.strategy,
            self.seed,
            self.report.stabilization.map(fmt).unwrap_or_default(),
            fmt(self.report.deadline),
            self.in_time(),
            self.synchronized,
            self.report.peaceful,
            self.contraction(),
            self.audit(),
            self.emergency(),
            self.report.precision.map(|w| format!("{:.4}", w as f64 / self.units as f64)).unwrap_or_default(),
            self.messages_per_cycle().map(|m| format!("{m:.4}")).unwrap_or_default(),
            self.passed(),
        )
    }
}

/// Runs one scenario and checks it.
pub fn evaluate(s: &Scenario) -> Result<Verdict, MatrixError> {
    evaluate_trace(s, &run(s)?)
}

/// Checks the trace of `s`.
pub fn evaluate_trace(s: &Scenario, trace: &Trace) -> Result<Verdict, MatrixError> {
    let p = &s.params;
    let rep = report(trace, p);
    let scale = trace.scale();
    let horizon = trace.meta.horizon;
    let synchronized = match rep.stabilization {
        Some(t) => {
            let long_enough = horizon >= t + scale.ceil(&(Rational::from_integer(10 * p.cycles as i128) * p.period));
            let process = PulseProcess::from_trace(trace).suffix(t);
            long_enough && is_synchronized(&process, SyncBounds::pulses(p, scale), horizon)?
        }
        None => false,
    };
    Ok(Verdict {
        n: p.n,
        f: p.f,
        drift: fmt_rational(&p.drift),
        strategy: s.strategy.to_string(),
        seed: s.seed,
        report: rep,
        synchronized,
        horizon,
        units: scale.units(),
    })
}
