#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;
mod error;
mod output;
mod pipeline;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use config::ExperimentConfig;
use error::CliError;
use output::{write_json, RunDir};
use pipeline::{Check, Outcome};

#[derive(Parser)]
#[command(
    name = "frontlab",
    version,
    about = "Bistable front experiments: profiles, radial and polar runs, delay fits, certificates"
)]
struct Cli {
    /// TOML configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, or the primary output file of the subcommand.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for the polar solver and the residual lattice.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Travelling wave `(U*, c*)`: writes profile.csv.
    Profile(ProfileArgs),
    /// Radial run: writes fronts.csv and snapshots.csv.
    Simulate1d(Simulate1dArgs),
    /// Polar run: writes field_t*.csv, shift.csv and diagnostics.csv.
    Simulate2d(Simulate2dArgs),
    /// Delay-law fit of a fronts.csv: writes fit.json.
    Fit(FitArgs),
    /// ODE certificates and the super-solution residual: writes cert.json and certificate.csv.
    Certify(CertifyArgs),
    /// Full pipeline with pass/fail checks: exits 4 when a check fails.
    Report(ReportArgs),
}

#[derive(Args)]
struct ProfileArgs {
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Args)]
struct Simulate1dArgs {
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    r1: Option<f64>,
    #[arg(long)]
    r2: Option<f64>,
    #[arg(long)]
    dr: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long = "t-final")]
    t_final: Option<f64>,
    /// `lab` or `moving`.
    #[arg(long)]
    frame: Option<String>,
    /// `profile_cap`, `ball_indicator` or `smoothed_ball`.
    #[arg(long)]
    initial: Option<String>,
}

#[derive(Args)]
struct Simulate2dArgs {
    #[arg(long)]
    theta: Option<f64>,
    /// `ellipse` or `star`.
    #[arg(long)]
    shape: Option<String>,
    #[arg(long)]
    a: Option<f64>,
    #[arg(long)]
    b: Option<f64>,
    #[arg(long)]
    m: Option<u32>,
    #[arg(long)]
    eps: Option<f64>,
    /// `sharp` or `smoothed`.
    #[arg(long)]
    edge: Option<String>,
    #[arg(long)]
    dr: Option<f64>,
    #[arg(long)]
    angles: Option<usize>,
    #[arg(long = "t-final")]
    t_final: Option<f64>,
}

#[derive(Args)]
struct FitArgs {
    /// fronts.csv with columns t, r_level.
    #[arg(long)]
    fronts: PathBuf,
    /// `fixed_speed` or `full`.
    #[arg(long)]
    mode: Option<String>,
    #[arg(long = "c-star")]
    c_star: Option<f64>,
    #[arg(long = "window-lo")]
    window_lo: Option<f64>,
    #[arg(long = "window-hi")]
    window_hi: Option<f64>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    theta: Option<f64>,
}

#[derive(Args)]
struct CertifyArgs {
    /// `41` (decay) or `310` (growth).
    #[arg(long)]
    system: Option<String>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long = "T-start")]
    t_start: Option<f64>,
    #[arg(long = "t-final")]
    t_final: Option<f64>,
    /// shift.csv of a polar run.
    #[arg(long)]
    shift: Option<PathBuf>,
    #[arg(long)]
    dim: Option<usize>,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long = "t-final")]
    t_final: Option<f64>,
    /// Include the polar run and the residual check.
    #[arg(long)]
    polar: bool,
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn apply_flags(cfg: &mut ExperimentConfig, cmd: &Command) {
    match cmd {
        Command::Profile(a) => {
            set(&mut cfg.nonlinearity.theta, a.theta);
            set(&mut cfg.nonlinearity.tol, a.tol);
        }
        Command::Simulate1d(a) => {
            set(&mut cfg.dim, a.dim);
            set(&mut cfg.nonlinearity.theta, a.theta);
            set(&mut cfg.initial.r1, a.r1);
            set(&mut cfg.initial.r2, a.r2);
            set(&mut cfg.grid.dr, a.dr);
            set(&mut cfg.time.dt, a.dt);
            set(&mut cfg.time.t_final, a.t_final);
            set(&mut cfg.time.frame, a.frame.clone());
            set(&mut cfg.initial.kind, a.initial.clone());
        }
        Command::Simulate2d(a) => {
            set(&mut cfg.nonlinearity.theta, a.theta);
            set(&mut cfg.shape.kind, a.shape.clone());
            set(&mut cfg.shape.a, a.a);
            set(&mut cfg.shape.b, a.b);
            set(&mut cfg.shape.m, a.m);
            set(&mut cfg.shape.eps, a.eps);
            set(&mut cfg.shape.edge, a.edge.clone());
            set(&mut cfg.grid.dr_polar, a.dr);
            set(&mut cfg.grid.n_angles, a.angles);
            set(&mut cfg.time.t_final, a.t_final);
        }
        Command::Fit(a) => {
            set(&mut cfg.fit.mode, a.mode.clone());
            if a.c_star.is_some() {
                cfg.fit.c_star = a.c_star;
            }
            if a.window_lo.is_some() {
                cfg.fit.window_lo = a.window_lo;
            }
            if a.window_hi.is_some() {
                cfg.fit.window_hi = a.window_hi;
            }
            set(&mut cfg.dim, a.dim);
            set(&mut cfg.nonlinearity.theta, a.theta);
        }
        Command::Certify(a) => {
            set(&mut cfg.certificate.system, a.system.clone());
            set(&mut cfg.nonlinearity.theta, a.theta);
            set(&mut cfg.certificate.eps, a.eps);
            if a.t_start.is_some() {
                cfg.certificate.t_start = a.t_start;
            }
            if a.t_final.is_some() {
                cfg.certificate.t_final = a.t_final;
            }
            if a.shift.is_some() {
                cfg.certificate.shift_path = a.shift.clone();
            }
            set(&mut cfg.dim, a.dim);
        }
        Command::Report(a) => {
            set(&mut cfg.nonlinearity.theta, a.theta);
            set(&mut cfg.dim, a.dim);
            set(&mut cfg.time.t_final, a.t_final);
            if a.polar {
                cfg.report.polar = true;
            }
        }
    }
}

fn primary_file(cmd: &Command) -> &'static str {
    match cmd {
        Command::Profile(_) => "profile.csv",
        Command::Simulate1d(_) => "fronts.csv",
        Command::Simulate2d(_) => "shift.csv",
        Command::Fit(_) => "fit.json",
        Command::Certify(_) => "cert.json",
        Command::Report(_) => "report.json",
    }
}

fn command_name(cmd: &Command) -> &'static str {
    match cmd {
        Command::Profile(_) => "profile",
        Command::Simulate1d(_) => "simulate1d",
        Command::Simulate2d(_) => "simulate2d",
        Command::Fit(_) => "fit",
        Command::Certify(_) => "certify",
        Command::Report(_) => "report",
    }
}

fn report_pipeline(cfg: &ExperimentConfig, run: &RunDir) -> Result<Outcome, CliError> {
    let s = pipeline::setup(cfg)?;
    let mut checks: Vec<Check> = Vec::new();
    let mut results = json!({});
    let prof = pipeline::profile(cfg, &s, &run.file("profile.csv"))?;
    results["profile"] = prof.results;
    checks.extend(prof.checks);
    let (sim, history) = pipeline::simulate1d(cfg, &s, &run.dir)?;
    results["simulate1d"] = sim.results;
    let fit = pipeline::fit(cfg, s.profile.c_star, &history, &run.file("fit.json"))?;
    results["fit"] = fit.results;
    checks.extend(fit.checks);
    let shift = if cfg.report.polar {
        let (sim2, shift) = pipeline::simulate2d(cfg, &s, &run.dir)?;
        results["simulate2d"] = sim2.results;
        Some(shift.s_values)
    } else {
        None
    };
    let mut cert_cfg = cfg.clone();
    cert_cfg.certificate.system = "41".into();
    let cert = pipeline::certify(
        &cert_cfg,
        &s,
        shift.as_deref(),
        &run.dir,
        &run.file("cert.json"),
    )?;
    results["certify"] = cert.results;
    checks.extend(cert.checks);
    Ok(Outcome { results, checks })
}

fn execute(cli: &Cli, cfg: &ExperimentConfig, run: &RunDir) -> Result<Outcome, CliError> {
    match &cli.command {
        Command::Profile(_) => {
            let s = pipeline::setup(cfg)?;
            pipeline::profile(cfg, &s, &run.primary)
        }
        Command::Simulate1d(_) => {
            let s = pipeline::setup(cfg)?;
            Ok(pipeline::simulate1d(cfg, &s, &run.dir)?.0)
        }
        Command::Simulate2d(_) => {
            let s = pipeline::setup(cfg)?;
            Ok(pipeline::simulate2d(cfg, &s, &run.dir)?.0)
        }
        Command::Fit(a) => {
            let h = pipeline::read_fronts(&a.fronts, cfg.fit.level)?;
            let c_star = match cfg.fit.c_star {
                Some(c) => c,
                None => pipeline::setup(cfg)?.profile.c_star,
            };
            pipeline::fit(cfg, c_star, &h, &run.primary)
        }
        Command::Certify(_) => {
            let s = pipeline::setup(cfg)?;
            let shift = match &cfg.certificate.shift_path {
                Some(p) => Some(pipeline::read_shift(p)?),
                None => None,
            };
            pipeline::certify(cfg, &s, shift.as_deref(), &run.dir, &run.primary)
        }
        Command::Report(_) => report_pipeline(cfg, run),
    }
}

fn main_inner(cli: Cli) -> Result<(), CliError> {
    let (mut cfg, source) = match &cli.config {
        Some(p) => {
            let (c, text) = ExperimentConfig::load(p)?;
            (c, Some(text))
        }
        None => (ExperimentConfig::default(), None),
    };
    apply_flags(&mut cfg, &cli.command);
    if cli.out.is_some() {
        cfg.output.dir = None;
    }
    cfg.validate()?;
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("--threads: {e}")))?;
    }
    let hash = cfg.hash();
    let out: Option<&Path> = cli.out.as_deref().or(cfg.output.dir.as_deref());
    let run = RunDir::resolve(out, primary_file(&cli.command), &hash)?;
    run.echo_config(&cfg, source.as_deref())?;

    let outcome = execute(&cli, &cfg, &run)?;
    let pass = outcome.checks.iter().all(|c| c.pass);
    let report: Value = json!({
        "command": command_name(&cli.command),
        "config_hash": hash,
        "versions": { "frontlab": frontlab::VERSION, "frontlab_cli": env!("CARGO_PKG_VERSION") },
        "results": outcome.results,
        "checks": outcome.checks,
        "pass": pass,
    });
    write_json(&run.file("report.json"), &report)?;
    println!("{}", run.dir.display());
    if matches!(cli.command, Command::Report(_)) && !pass {
        let failed: Vec<&str> = outcome
            .checks
            .iter()
            .filter(|c| !c.pass)
            .map(|c| c.name.as_str())
            .collect();
        return Err(CliError::Acceptance(failed.join(", ")));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match main_inner(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("frontlab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
