//! `peaceable`: run scenarios, sweep seeds, inspect parameters and check traces.
//!
//! Exit status: 0 when every checked property holds, 1 on a property
//! failure, 2 on a configuration or validation error.

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use peaceable::adversary::Strategy;
use peaceable::config::ScenarioConfig;
use peaceable::matrix::{evaluate_trace, strategies, Verdict};
use peaceable::params::{fmt_rational, parse_rational, validate, ParamSet};
use peaceable::sim::run;
use peaceable::trace::Trace;
use rayon::prelude::*;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

#[derive(Parser)]
#[command(name = "peaceable", version, about = "Byzantine pulse synchronization simulator and trace checker")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// Scenario file with one `key = value` per line.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed; overrides the `seed` key.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for artifacts.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Print records in a fixed field order instead of a summary.
    #[arg(long, global = true)]
    machine_readable: bool,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate one scenario, write its trace and check it.
    Run,
    /// Simulate every (seed, adversary) pair and print one CSV row each.
    Sweep {
        /// Seed range `a..b` (end excluded) or a single seed.
        #[arg(long, default_value = "0..20")]
        seeds: SeedRange,
        /// Adversary names; a bare `crash` crashes at tick 500 + 311·seed.
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "benign,crash,random-byzantine,split-world,delay-maximizer,engage-spammer"
        )]
        adversaries: Vec<String>,
    },
    /// Solve and print the parameter set and its validity ledger.
    Params(ParamOverrides),
    /// Check a trace file written by `run`.
    Check { trace: PathBuf },
}

#[derive(Args)]
struct ParamOverrides {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    f: Option<usize>,
    #[arg(long)]
    d: Option<String>,
    #[arg(long)]
    rho: Option<String>,
    #[arg(long)]
    epsilon0: Option<String>,
    #[arg(long)]
    cycles: Option<u32>,
    #[arg(long)]
    ba_rounds: Option<u32>,
}

#[derive(Debug, Clone, Copy)]
struct SeedRange(u64, u64);

impl FromStr for SeedRange {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let num = |x: &str| x.trim().parse::<u64>().map_err(|_| format!("bad seed range `{s}`"));
        match s.split_once("..") {
            Some((a, b)) => Ok(SeedRange(num(a)?, num(b)?)),
            None => num(s).map(|a| SeedRange(a, a + 1)),
        }
    }
}

/// Failure of a checked property, as opposed to a usage error.
struct PropertyFailure;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.cmd {
        Cmd::Run => cmd_run(&cli.common),
        Cmd::Sweep { seeds, adversaries } => cmd_sweep(&cli.common, *seeds, adversaries),
        Cmd::Params(o) => cmd_params(&cli.common, o),
        Cmd::Check { trace } => cmd_check(&cli.common, trace),
    };
    match outcome {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(PropertyFailure)) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

type Outcome = Result<Result<(), PropertyFailure>>;

fn verdict(ok: bool) -> Result<(), PropertyFailure> {
    if ok {
        Ok(())
    } else {
        Err(PropertyFailure)
    }
}

fn load_config(common: &Common) -> Result<ScenarioConfig> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            text.parse().with_context(|| format!("in {}", path.display()))?
        }
        None => ScenarioConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn write(dir: &Path, name: &str, body: &str) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    fs::write(&path, body).with_context(|| format!("writing {}", path.display()))
}

fn csv(cfg: &ScenarioConfig, rows: &[Verdict]) -> String {
    let mut out = format!("config,{}\n", Verdict::CSV_HEADER);
    for v in rows {
        out.push_str(&format!("{},{}\n", cfg.digest(), v.csv_row()));
    }
    out
}

fn ticks(t: peaceable::time::RefTime, units: u64) -> String {
    format!("{:.4}", t.0 as f64 / units as f64)
}

fn summary(v: &Verdict) -> String {
    let r = &v.report;
    let mut lines = vec![match r.stabilization {
        Some(t) => format!("stabilized at {} ticks, deadline {}", ticks(t, v.units), ticks(r.deadline, v.units)),
        None => format!("no stabilization before the horizon {}", ticks(v.horizon, v.units)),
    }];
    if let Some(w) = r.precision {
        lines.push(format!("largest post-stabilization cluster width {:.4} ticks", w as f64 / v.units as f64));
    }
    let mark = |ok: bool| if ok { "ok" } else { "FAILED" };
    lines.push(format!(
        "synchronized {}, peaceful {}, contraction {}, message audit {}, emergency monitors {}",
        mark(v.synchronized),
        mark(r.peaceful),
        mark(v.contraction()),
        mark(v.audit()),
        mark(v.emergency())
    ));
    let e = &r.emergency;
    let reasons = r
        .convergence
        .violations
        .iter()
        .chain(&e.liveness)
        .chain(&e.peaceability)
        .chain(&e.good_luck)
        .chain(&e.separation);
    lines.extend(reasons.take(5).map(|x| format!("  {x}")));
    lines.push(format!("verdict: {}", if v.passed() { "PASS" } else { "FAIL" }));
    lines.join("\n")
}

fn cmd_run(common: &Common) -> Outcome {
    let cfg = load_config(common)?;
    let (scn, warnings) = cfg.scenario(cfg.seed)?;
    for w in warnings {
        eprintln!("warning: {w}");
    }
    let trace = run(&scn)?;
    let v = evaluate_trace(&scn, &trace)?;
    let table = csv(&cfg, std::slice::from_ref(&v));
    if let Some(dir) = &common.out {
        write(dir, "config.txt", &cfg.to_string())?;
        write(dir, "trace.txt", &trace.export())?;
        write(dir, "report.csv", &table)?;
    }
    if common.machine_readable {
        print!("{table}");
    } else {
        println!("config {} seed {} adversary {}", cfg.digest(), scn.seed, scn.strategy);
        println!("{}", summary(&v));
    }
    // A forced short horizon cannot show the long suffix, so only timing counts.
    let ok = if cfg.allow_short_horizon { v.in_time() } else { v.passed() };
    Ok(verdict(ok))
}

fn cmd_sweep(common: &Common, seeds: SeedRange, adversaries: &[String]) -> Outcome {
    let cfg = load_config(common)?;
    for name in adversaries {
        Strategy::from_str(name).map_err(|e| anyhow::anyhow!("{e}"))?;
    }
    let jobs: Vec<(u64, Strategy)> = (seeds.0..seeds.1)
        .flat_map(|seed| {
            adversaries.iter().map(move |name| {
                let strategy = match name.as_str() {
                    "crash" => strategies(seed)[1],
                    other => other.parse().expect("checked above"),
                };
                (seed, strategy)
            })
        })
        .collect();
    let rows: Vec<Verdict> = jobs
        .par_iter()
        .map(|&(seed, strategy)| -> Result<Verdict> {
            let (mut scn, _) = cfg.scenario(seed)?;
            scn.strategy = strategy;
            let trace = run(&scn)?;
            Ok(evaluate_trace(&scn, &trace)?)
        })
        .collect::<Result<_>>()?;
    let table = csv(&cfg, &rows);
    if let Some(dir) = &common.out {
        write(dir, "config.txt", &cfg.to_string())?;
        write(dir, "sweep.csv", &table)?;
    }
    print!("{table}");
    let failed = rows.iter().filter(|v| !v.passed()).count();
    if !common.machine_readable {
        let slowest = rows.iter().filter_map(|v| v.report.stabilization.map(|t| (t, v.units))).max();
        let deadline = rows.first().map(|v| ticks(v.report.deadline, v.units));
        match (slowest, deadline) {
            (Some((t, units)), Some(d)) => {
                eprintln!("latest stabilization {} ticks against deadline {d}", ticks(t, units))
            }
            _ => eprintln!("no run stabilized"),
        }
        eprintln!("{} of {} rows failed", failed, rows.len());
    }
    Ok(verdict(failed == 0))
}

fn cmd_params(common: &Common, o: &ParamOverrides) -> Outcome {
    let mut cfg = load_config(common)?;
    let rat = |s: &Option<String>, key: &str| -> Result<Option<_>> {
        s.as_deref().map(|x| parse_rational(x).with_context(|| format!("bad --{key} `{x}`"))).transpose()
    };
    cfg.n = o.n.unwrap_or(cfg.n);
    cfg.f = o.f.unwrap_or(cfg.f);
    cfg.delay = rat(&o.d, "d")?.unwrap_or(cfg.delay);
    cfg.drift = rat(&o.rho, "rho")?.unwrap_or(cfg.drift);
    cfg.precision = rat(&o.epsilon0, "epsilon0")?.unwrap_or(cfg.precision);
    cfg.cycles = o.cycles.or(cfg.cycles);
    cfg.ba_rounds = o.ba_rounds.or(cfg.ba_rounds);
    let p = peaceable::params::solve(&cfg.inputs())?;
    let ledger = validate(&p);
    if common.machine_readable {
        for (k, v) in p.rows() {
            println!("{k}={v}");
        }
        for e in &ledger {
            println!(
                "ledger.{}={},{},{},{}",
                e.name,
                fmt_rational(&e.lhs),
                fmt_rational(&e.rhs),
                if e.gating { "gating" } else { "advisory" },
                if e.pass { "pass" } else { "fail" }
            );
        }
        println!("digest={}", p.digest());
    } else {
        print_params(&p, &ledger);
    }
    Ok(verdict(ledger.iter().all(|e| e.pass || !e.gating)))
}

fn print_params(p: &ParamSet, ledger: &[peaceable::params::LedgerEntry]) {
    let rows = p.rows();
    let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    for (k, v) in &rows {
        let approx = parse_rational(v).map(|r| *r.numer() as f64 / *r.denom() as f64);
        match approx {
            Some(x) if !v.chars().all(|c| c.is_ascii_digit()) => println!("{k:<width$}  {v}  (≈ {x:.4})"),
            _ => println!("{k:<width$}  {v}"),
        }
    }
    println!();
    let width = ledger.iter().map(|e| e.name.len()).max().unwrap_or(0);
    for e in ledger {
        let op = if e.strict { ">" } else { "≥" };
        let status = match (e.pass, e.gating) {
            (true, _) => "pass",
            (false, true) => "FAIL",
            (false, false) => "fail (advisory)",
        };
        println!("{:<width$}  {} {op} {}  {status}", e.name, fmt_rational(&e.lhs), fmt_rational(&e.rhs));
    }
}

fn cmd_check(common: &Common, path: &Path) -> Outcome {
    let mut cfg = load_config(common)?;
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let trace = Trace::parse(&text).with_context(|| format!("in {}", path.display()))?;
    cfg.seed = trace.meta.seed;
    let (mut scn, _) = cfg.scenario(trace.meta.seed)?;
    if scn.params.digest() != trace.meta.params_digest {
        bail!("{} was produced with other parameters; pass its --config", path.display());
    }
    scn.faulty = trace.meta.faulty.clone();
    let v = evaluate_trace(&scn, &trace)?;
    print!("{}", csv(&cfg, std::slice::from_ref(&v)));
    if !common.machine_readable {
        eprintln!("{}", summary(&v));
    }
    Ok(verdict(v.passed()))
}
