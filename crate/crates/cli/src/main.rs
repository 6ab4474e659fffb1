use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DVector;
use serde::Serialize;

use taultn_core::cert::{check_certificate, sample_lds_ensemble, CertSearchConfig};
use taultn_core::equilibrium::{verify_tau_independence, EnumerationConfig};
use taultn_core::harness::{
    emit_field_grid, run_descent_study, run_limit_cycle_study, run_monte_carlo, ExperimentConfig,
    ExperimentKind, RunDir, SpecSource,
};
use taultn_core::integrate::{HssOptions, PdsOptions, TauOptions, TimeScale};
use taultn_core::lyapunov::StudyMode;
use taultn_core::{
    find_certificate, integrate_hss, integrate_pds, integrate_tau_ltn, solve_by_enumeration,
    DiagonalCertificate, Error, NetworkSpec, Result,
};

const EXIT_CONFIG: u8 = 1;
const EXIT_NUMERICAL: u8 = 2;
const EXIT_ANOMALY: u8 = 3;

#[derive(Parser, Debug)]
#[command(
    name = "taultn",
    version,
    about = "Linear-threshold network family: certificates, equilibria, simulation and studies"
)]
struct Cli {
    /// Experiment configuration (JSON). Command-line flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for randomized commands.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Run directory for artifacts.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Search for a diagonal Lyapunov certificate, check a given one, or
    /// sample a certified ensemble.
    Certify(CertifyArgs),
    /// Enumerate equilibria and check that they are shared by the family.
    Equilibrium(EquilibriumArgs),
    /// Integrate one member or limit and print the trajectory as CSV.
    Simulate(SimulateArgs),
    /// Audit both Lyapunov functions across the family.
    Descent(DescentArgs),
    /// Sample vector fields of a two-neuron network on a grid.
    Field(FieldArgs),
    /// Test random certified networks for global convergence.
    Montecarlo(MonteCarloArgs),
    /// Check persistence of oscillations across the family.
    Limitcycle(LimitCycleArgs),
}

#[derive(Args, Debug)]
struct CertifyArgs {
    #[arg(long, conflicts_with = "sample")]
    spec: Option<PathBuf>,
    /// Comma-separated diagonal weights to check instead of searching.
    #[arg(long, value_delimiter = ',', requires = "spec")]
    lambda: Option<Vec<f64>>,
    /// Sample an ensemble of this dimension (JSON lines on stdout).
    #[arg(long)]
    sample: Option<usize>,
    #[arg(long, default_value_t = 10, requires = "sample")]
    count: usize,
    #[arg(long)]
    restarts: Option<usize>,
}

#[derive(Args, Debug)]
struct EquilibriumArgs {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "1e-4,1,1e4")]
    taus: Vec<f64>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
enum SimMode {
    Tau,
    Pds,
    Hss,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long, value_enum)]
    mode: SimMode,
    #[arg(long, required_if_eq("mode", "tau"))]
    tau: Option<f64>,
    /// Initial state; defaults to the centre of the state polytope.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    x0: Vec<f64>,
    #[arg(long)]
    t_end: f64,
    /// Integrate the member in slow time `s = t/τ`.
    #[arg(long)]
    slow: bool,
    /// Step size (fixed-step schemes).
    #[arg(long)]
    h: Option<f64>,
    /// Keep every k-th step.
    #[arg(long, default_value_t = 1)]
    every: usize,
}

#[derive(Args, Debug)]
struct DescentArgs {
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Certificate JSON; searched for when omitted.
    #[arg(long)]
    cert: Option<PathBuf>,
    /// Member grid, e.g. `taus=1e-3,1,1e3`.
    #[arg(long)]
    grid: Option<String>,
}

#[derive(Args, Debug)]
struct FieldArgs {
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Modes, e.g. `tau=1e-4,tau=1,pds,hss`.
    #[arg(long, value_delimiter = ',')]
    modes: Option<Vec<String>>,
    #[arg(long)]
    resolution: Option<usize>,
}

#[derive(Args, Debug)]
struct MonteCarloArgs {
    #[arg(long, value_delimiter = ',')]
    dims: Option<Vec<usize>>,
    #[arg(long)]
    samples: Option<usize>,
    /// Initial conditions per sample.
    #[arg(long)]
    ics: Option<usize>,
}

#[derive(Args, Debug)]
struct LimitCycleArgs {
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    x0: Option<Vec<f64>>,
    #[arg(long)]
    horizon: Option<f64>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_CONFIG)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: cannot set thread count: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    }
    match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Numerical(_) | Error::Integration { .. } | Error::SamplerExhausted { .. } => {
            EXIT_NUMERICAL
        }
        _ => EXIT_CONFIG,
    }
}

fn dispatch(cli: &Cli) -> Result<ExitCode> {
    match &cli.command {
        Command::Certify(a) => certify(cli, a),
        Command::Equilibrium(a) => equilibrium(a),
        Command::Simulate(a) => simulate(cli, a),
        Command::Descent(a) => descent(cli, a),
        Command::Field(a) => field(cli, a),
        Command::Montecarlo(a) => montecarlo(cli, a),
        Command::Limitcycle(a) => limitcycle(cli, a),
    }
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn load_spec(path: &Path) -> Result<NetworkSpec> {
    let text =
        fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    NetworkSpec::from_json(&text)
}

/// Base config from `--config` (or defaults for `kind`), with global flags
/// and an optional `--spec` applied on top.
fn experiment(cli: &Cli, kind: ExperimentKind, spec: Option<&PathBuf>) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            let cfg: ExperimentConfig =
                serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
            if cfg.kind != kind {
                return Err(Error::Config(format!(
                    "config is for {:?}, not {kind:?}",
                    cfg.kind
                )));
            }
            cfg
        }
        None => ExperimentConfig::new(kind),
    };
    if let Some(s) = cli.seed {
        cfg.seed = Some(s);
    }
    if let Some(o) = &cli.out {
        cfg.output_dir = Some(o.clone());
    }
    if let Some(p) = spec {
        cfg.spec = Some(SpecSource::File(p.clone()));
    }
    Ok(cfg)
}

fn run_dir(cfg: &ExperimentConfig) -> Result<Option<RunDir>> {
    cfg.output_dir
        .as_deref()
        .map(|p| RunDir::create(p, cfg))
        .transpose()
}

fn spec_of(cfg: &ExperimentConfig) -> Result<NetworkSpec> {
    cfg.spec
        .as_ref()
        .ok_or_else(|| Error::Config("a network spec is required (--spec)".into()))?
        .load()
}

fn certify(cli: &Cli, a: &CertifyArgs) -> Result<ExitCode> {
    let search = CertSearchConfig {
        restarts: a.restarts.unwrap_or(CertSearchConfig::default().restarts),
        seed: cli.seed.unwrap_or_default(),
        ..Default::default()
    };
    if let Some(n) = a.sample {
        let seed = cli
            .seed
            .ok_or_else(|| Error::Config("ensemble sampling requires --seed".into()))?;
        let cfg = taultn_core::cert::SamplerConfig {
            search,
            ..Default::default()
        };
        let ens = sample_lds_ensemble(n, a.count, seed, &cfg)?;
        let body = ens.to_jsonl()?;
        match &cli.out {
            Some(dir) => {
                fs::create_dir_all(dir)?;
                fs::write(dir.join("ensemble.jsonl"), body)?;
            }
            None => print!("{body}"),
        }
        return Ok(ExitCode::SUCCESS);
    }
    let path = a
        .spec
        .as_ref()
        .ok_or_else(|| Error::Config("certify needs --spec or --sample".into()))?;
    let spec = load_spec(path)?;
    match &a.lambda {
        Some(l) => {
            if l.len() != spec.n() {
                return Err(Error::Config(format!(
                    "--lambda has {} entries, network has {}",
                    l.len(),
                    spec.n()
                )));
            }
            let chk = check_certificate(spec.a(), l)?;
            print_json(
                &serde_json::json!({ "lambda": l, "mu": chk.mu, "margin": chk.margin, "valid": chk.valid }),
            )?;
        }
        None => print_json(&find_certificate(spec.a(), &search)?)?,
    }
    Ok(ExitCode::SUCCESS)
}

fn equilibrium(a: &EquilibriumArgs) -> Result<ExitCode> {
    let spec = load_spec(&a.spec)?;
    let eq = solve_by_enumeration(&spec, &EnumerationConfig::default())?;
    let tau_check = eq
        .points
        .iter()
        .map(|p| verify_tau_independence(&spec, &a.taus, &p.state, 1e-9))
        .collect::<Result<Vec<_>>>()?;
    let points: Vec<Vec<f64>> = eq
        .points
        .iter()
        .map(|p| p.state.iter().copied().collect())
        .collect();
    let patterns: Vec<String> = eq.points.iter().map(|p| p.pattern.code()).collect();
    let residuals: Vec<f64> = eq.points.iter().map(|p| p.residual).collect();
    print_json(&serde_json::json!({
        "points": points,
        "patterns": patterns,
        "residuals": residuals,
        "tau_check": tau_check,
    }))?;
    Ok(ExitCode::SUCCESS)
}

fn simulate(cli: &Cli, a: &SimulateArgs) -> Result<ExitCode> {
    let spec = load_spec(&a.spec)?;
    let x0 = if a.x0.is_empty() {
        spec.d().map(|d| 0.5 / d)
    } else {
        DVector::from_column_slice(&a.x0)
    };
    let recording = taultn_core::integrate::Recording {
        every: a.every.max(1),
        ..Default::default()
    };
    let traj = match a.mode {
        SimMode::Pds => {
            let d = PdsOptions::default();
            integrate_pds(
                &spec,
                &x0,
                a.t_end,
                &PdsOptions {
                    h: a.h.unwrap_or(d.h),
                    recording,
                    ..d
                },
            )?
        }
        SimMode::Hss => {
            let d = HssOptions::default();
            integrate_hss(
                &spec,
                &x0,
                a.t_end,
                &HssOptions {
                    h: a.h.unwrap_or(d.h),
                    recording,
                    ..d
                },
            )?
        }
        SimMode::Tau => {
            let tau = a.tau.expect("clap enforces --tau");
            let scale = if a.slow {
                TimeScale::Slow
            } else {
                TimeScale::Fast
            };
            let step =
                a.h.map(|h| taultn_core::integrate::StepControl::Fixed { h });
            integrate_tau_ltn(
                &spec,
                tau,
                &x0,
                a.t_end,
                &TauOptions {
                    scale,
                    step,
                    recording,
                },
            )?
        }
    };
    match &cli.out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            traj.write_csv(fs::File::create(
                dir.join(format!("{}.csv", traj.mode.label())),
            )?)?;
        }
        None => traj.write_csv(io::stdout().lock())?,
    }
    Ok(ExitCode::SUCCESS)
}

fn parse_grid(s: &str) -> Result<Vec<f64>> {
    let list = s
        .strip_prefix("taus=")
        .ok_or_else(|| Error::Config(format!("expected --grid taus=..., got {s}")))?;
    list.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|e| Error::Config(format!("bad τ {t:?}: {e}")))
        })
        .collect()
}

fn parse_mode(s: &str) -> Result<StudyMode> {
    match s.trim() {
        "pds" => Ok(StudyMode::Pds),
        "hss" => Ok(StudyMode::Hss),
        t => {
            let v = t
                .strip_prefix("tau=")
                .and_then(|v| v.parse::<f64>().ok())
                .ok_or_else(|| {
                    Error::Config(format!("unknown mode {t:?}; use pds, hss or tau=<v>"))
                })?;
            Ok(StudyMode::Tau(v))
        }
    }
}

fn descent(cli: &Cli, a: &DescentArgs) -> Result<ExitCode> {
    let mut cfg = experiment(cli, ExperimentKind::DescentStudy, a.spec.as_ref())?;
    if let Some(g) = &a.grid {
        cfg.descent.taus = parse_grid(g)?;
    }
    cfg.validate()?;
    let spec = spec_of(&cfg)?;
    let cert = match &a.cert {
        Some(p) => {
            let text = fs::read_to_string(p)?;
            Some(
                serde_json::from_str::<DiagonalCertificate>(&text)
                    .map_err(|e| Error::Config(e.to_string()))?,
            )
        }
        None => None,
    };
    let dir = run_dir(&cfg)?;
    let (cert, study) = run_descent_study(&spec, &cfg.descent, cert, dir.as_ref())?;
    let cells: Vec<_> = study
        .cells
        .iter()
        .map(|c| {
            serde_json::json!({
                "mode": c.mode.label(),
                "kind": c.kind.name(),
                "label": c.label,
                "violations": c.violation_count,
                "max_excess": c.max_excess,
                "severity": c.severity,
            })
        })
        .collect();
    print_json(&serde_json::json!({ "certificate": cert, "cells": cells }))?;
    Ok(ExitCode::SUCCESS)
}

fn field(cli: &Cli, a: &FieldArgs) -> Result<ExitCode> {
    let mut cfg = experiment(cli, ExperimentKind::FieldGrid, a.spec.as_ref())?;
    if let Some(m) = &a.modes {
        cfg.field.modes = m.iter().map(|s| parse_mode(s)).collect::<Result<_>>()?;
    }
    if let Some(r) = a.resolution {
        cfg.field.resolution = r;
    }
    cfg.validate()?;
    if cfg.output_dir.is_none() {
        return Err(Error::Config(
            "field grids are written to files; pass --out".into(),
        ));
    }
    let spec = spec_of(&cfg)?;
    let dir = run_dir(&cfg)?;
    let r = emit_field_grid(&spec, &cfg.field, dir.as_ref())?;
    let modes: Vec<String> = r.grids.iter().map(|g| g.mode.label()).collect();
    print_json(&serde_json::json!({ "resolution": r.resolution, "modes": modes, "loci": r.loci }))?;
    Ok(ExitCode::SUCCESS)
}

fn montecarlo(cli: &Cli, a: &MonteCarloArgs) -> Result<ExitCode> {
    let mut cfg = experiment(cli, ExperimentKind::MonteCarlo, None)?;
    if let Some(d) = &a.dims {
        cfg.monte_carlo.dimensions = d.clone();
    }
    if let Some(s) = a.samples {
        cfg.monte_carlo.samples = s;
    }
    if let Some(k) = a.ics {
        cfg.monte_carlo.initial_conditions = k;
    }
    cfg.validate()?;
    let seed = cfg.seed.expect("validated");
    let dir = run_dir(&cfg)?;
    let report = run_monte_carlo(&cfg.monte_carlo, seed, dir.as_ref())?;
    let failed: Vec<_> = report
        .failed()
        .map(|r| serde_json::json!({ "n": r.n, "index": r.index, "spec_hash": r.spec_hash, "note": r.note }))
        .collect();
    print_json(&serde_json::json!({
        "config_hash": cfg.hash(),
        "counts": report.counts,
        "rejected": report.rejected.len(),
        "failed": failed,
    }))?;
    Ok(if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_ANOMALY)
    })
}

fn limitcycle(cli: &Cli, a: &LimitCycleArgs) -> Result<ExitCode> {
    let mut cfg = experiment(cli, ExperimentKind::LimitCycle, a.spec.as_ref())?;
    if let Some(x0) = &a.x0 {
        cfg.limit_cycle.x0 = x0.clone();
    }
    if let Some(h) = a.horizon {
        cfg.limit_cycle.horizon = h;
    }
    cfg.validate()?;
    let spec = spec_of(&cfg)?;
    let dir = run_dir(&cfg)?;
    let r = run_limit_cycle_study(&spec, &cfg.limit_cycle, dir.as_ref())?;
    print_json(&r)?;
    Ok(ExitCode::SUCCESS)
}
