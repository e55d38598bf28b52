//! Command-line front end: run the scan tests on a CSV matrix, evaluate
//! detection boundaries, and drive Monte Carlo experiments and sweeps.

pub mod config;
pub mod matrix_io;

use clap::{Args, Parser, Subcommand, ValueEnum};
use cpdetect_core::boundaries::{boundary_one_sided, boundary_regime2, boundary_two_sided, r2_star};
use cpdetect_core::detectors::detect;
use cpdetect_core::grids::{scan_grid, DeltaRule};
use cpdetect_core::simulation::{estimate_errors, phase_sweep, ConfigIssue, ExperimentConfig, PhasePlan, PhasePoint};
use cpdetect_core::{CaseLabel, Side, SimError};
use serde::Serialize;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;
pub const WORKERS_ENV: &str = "CPDETECT_WORKERS";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("invalid configuration:\n{}", list(.0))]
    Config(Vec<ConfigIssue>),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

fn list(issues: &[ConfigIssue]) -> String {
    issues.iter().map(|i| format!("  {i}")).collect::<Vec<_>>().join("\n")
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Numeric(_) => 3,
            _ => 2,
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Config(issues) => CliError::Config(issues),
            SimError::LikelihoodRatioNotRepresentable(_) => CliError::Numeric(e.to_string()),
            other => CliError::Input(other.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "cpdetect", version, about = "Sparse high-dimensional changepoint detection")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the penalized Berk-Jones and max tests on a p x n CSV matrix.
    Detect(DetectArgs),
    /// Evaluate the detection boundary at (a, beta, p).
    Boundary(BoundaryArgs),
    /// Estimate Type I and Type II errors for one experiment.
    Simulate(RunArgs),
    /// Sweep a grid of calibrations and signal multiples.
    Sweep(RunArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SideArg {
    One,
    Two,
}

impl From<SideArg> for Side {
    fn from(s: SideArg) -> Self {
        match s {
            SideArg::One => Side::One,
            SideArg::Two => Side::Two,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    /// Headerless CSV, one row per coordinate.
    pub matrix: PathBuf,
    #[arg(long, value_enum, default_value = "one")]
    pub side: SideArg,
    #[arg(long, default_value_t = 2.0)]
    pub gamma: f64,
    /// Grid ratio minus one, or "auto".
    #[arg(long, default_value = "auto", value_parser = parse_delta)]
    pub delta: DeltaRule,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BoundaryArgs {
    #[arg(long)]
    pub a: f64,
    #[arg(long)]
    pub beta: f64,
    #[arg(long)]
    pub p: f64,
    #[arg(long, value_enum, default_value = "one")]
    pub side: SideArg,
    /// Use the double-logarithmic calibration instead.
    #[arg(long, conflicts_with = "side")]
    pub regime2: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// TOML configuration file.
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    pub config: Option<PathBuf>,
    /// Built-in configuration: "typeI-audit" for simulate, "phase-demo" for sweep.
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long, value_enum)]
    pub side: Option<SideArg>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long, value_parser = parse_delta)]
    pub delta: Option<DeltaRule>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub trials: Option<u32>,
    /// Output file; a `.meta.json` sidecar is written next to it.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
}

fn parse_delta(s: &str) -> Result<DeltaRule, String> {
    s.parse()
}

/// Size the global rayon pool from the environment. Must run before any
/// parallel work.
pub fn init_workers() -> Result<(), CliError> {
    let Ok(raw) = std::env::var(WORKERS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Input(format!("{WORKERS_ENV} must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Input(format!("cannot size worker pool: {e}")))
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Detect(args) => cmd_detect(&args),
        Command::Boundary(args) => cmd_boundary(&args),
        Command::Simulate(args) => cmd_simulate(&args),
        Command::Sweep(args) => cmd_sweep(&args),
    }
}

#[derive(Debug, Serialize)]
pub struct PbjReport {
    pub statistic: f64,
    pub penalized: f64,
    pub threshold: f64,
    pub reject: bool,
    pub argmax_t: usize,
    pub argmax_j: usize,
}

#[derive(Debug, Serialize)]
pub struct MaxReport {
    pub statistic: f64,
    pub threshold: f64,
    pub reject: bool,
}

#[derive(Debug, Serialize)]
pub struct DetectReport {
    pub schema_version: u32,
    pub p: usize,
    pub n: usize,
    pub grid_size: usize,
    pub side: Side,
    pub gamma: f64,
    pub pbj: PbjReport,
    pub max: MaxReport,
    pub combined_reject: bool,
}

pub fn cmd_detect(args: &DetectArgs) -> Result<(), CliError> {
    let file = fs::File::open(&args.matrix)
        .map_err(|e| CliError::Input(format!("cannot open {}: {e}", args.matrix.display())))?;
    let x = matrix_io::read_matrix(std::io::BufReader::new(file))?;
    let report = detect_report(&x, args.side.into(), args.gamma, args.delta)?;
    emit(args.out.as_deref(), &to_json(&report)?)
}

pub fn detect_report(
    x: &cpdetect_core::ObservationMatrix,
    side: Side,
    gamma: f64,
    delta: DeltaRule,
) -> Result<DetectReport, CliError> {
    let grid = scan_grid(x.n(), delta).map_err(|e| CliError::Input(e.to_string()))?;
    let d = detect(x, &grid, side, gamma).map_err(|e| CliError::Input(e.to_string()))?;
    if !(d.scan.statistic.is_finite() && d.max.statistic.is_finite()) {
        return Err(CliError::Numeric("scan statistic is not finite".into()));
    }
    Ok(DetectReport {
        schema_version: SCHEMA_VERSION,
        p: x.p(),
        n: x.n(),
        grid_size: grid.len(),
        side,
        gamma,
        pbj: PbjReport {
            statistic: d.scan.statistic,
            penalized: d.scan.penalized,
            threshold: d.pbj.threshold,
            reject: d.pbj.reject,
            argmax_t: d.scan.argmax_t,
            argmax_j: d.scan.argmax_order_index,
        },
        max: MaxReport {
            statistic: d.max.statistic,
            threshold: d.max.threshold,
            reject: d.max.reject,
        },
        combined_reject: d.combined.reject,
    })
}

#[derive(Debug, Serialize)]
pub struct BoundaryReport {
    pub schema_version: u32,
    pub a: f64,
    pub beta: f64,
    pub p: f64,
    pub calibration: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub side: Option<Side>,
    /// Coefficient `r` in `rho^2 = 2 r ln p`; second calibration only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
    pub rho_squared: f64,
    pub rho: f64,
    pub case_label: CaseLabel,
}

pub fn boundary_report(args: &BoundaryArgs) -> Result<BoundaryReport, CliError> {
    let input = |e: cpdetect_core::BoundaryError| CliError::Input(e.to_string());
    let (value, side, r, calibration) = if args.regime2 {
        let r = r2_star(args.a, args.beta).map_err(input)?;
        (boundary_regime2(args.a, args.beta, args.p).map_err(input)?, None, Some(r), "two_log")
    } else {
        let side: Side = args.side.into();
        let v = match side {
            Side::One => boundary_one_sided(args.a, args.beta, args.p),
            Side::Two => boundary_two_sided(args.a, args.beta, args.p),
        }
        .map_err(input)?;
        (v, Some(side), None, "three_log")
    };
    Ok(BoundaryReport {
        schema_version: SCHEMA_VERSION,
        a: args.a,
        beta: args.beta,
        p: args.p,
        calibration,
        side,
        r,
        rho_squared: value.rho_squared,
        rho: value.rho(),
        case_label: value.case_label,
    })
}

pub fn cmd_boundary(args: &BoundaryArgs) -> Result<(), CliError> {
    emit(args.out.as_deref(), &to_json(&boundary_report(args)?)?)
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))
}

pub fn experiment_from_args(args: &RunArgs) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match (&args.config, args.preset.as_deref()) {
        (Some(path), _) => config::load_experiment(&read_text(path)?).map_err(CliError::Config)?,
        (None, Some("typeI-audit")) => ExperimentConfig::type1_audit(),
        (None, Some(other)) => return Err(CliError::Input(format!("unknown simulate preset {other:?}"))),
        (None, None) => return Err(CliError::Input("give --config or --preset".into())),
    };
    if let Some(s) = args.side {
        cfg.side = s.into();
    }
    if let Some(g) = args.gamma {
        cfg.gamma = g;
    }
    if let Some(d) = args.delta {
        cfg.delta = d;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(t) = args.trials {
        cfg.trials = t;
    }
    let issues = cfg.validate();
    if issues.is_empty() {
        Ok(cfg)
    } else {
        Err(CliError::Config(issues))
    }
}

pub fn plan_from_args(args: &RunArgs) -> Result<PhasePlan, CliError> {
    let mut plan = match (&args.config, args.preset.as_deref()) {
        (Some(path), _) => config::load_plan(&read_text(path)?).map_err(CliError::Config)?,
        (None, Some("phase-demo")) => PhasePlan::phase_demo(),
        (None, Some(other)) => return Err(CliError::Input(format!("unknown sweep preset {other:?}"))),
        (None, None) => return Err(CliError::Input("give --config or --preset".into())),
    };
    if let Some(s) = args.side {
        plan.side = s.into();
    }
    if let Some(g) = args.gamma {
        plan.gamma = g;
    }
    if let Some(d) = args.delta {
        plan.delta = d;
    }
    if let Some(s) = args.seed {
        plan.seed = s;
    }
    if let Some(t) = args.trials {
        plan.trials = t;
    }
    let issues = plan.validate();
    if issues.is_empty() {
        Ok(plan)
    } else {
        Err(CliError::Config(issues))
    }
}

pub fn cmd_simulate(args: &RunArgs) -> Result<(), CliError> {
    let cfg = experiment_from_args(args)?;
    let started = (SystemTime::now(), Instant::now());
    let report = estimate_errors(&cfg)?;
    let body = match args.format {
        Format::Json => to_json(&report)?,
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record([
                "test", "trials", "seed", "type1", "type1_lo", "type1_hi", "type2", "type2_lo", "type2_hi", "risk",
                "degenerate",
            ])
            .map_err(csv_err)?;
            let test = serde_json::to_value(report.test).map_err(json_err)?;
            w.write_record([
                test.as_str().unwrap_or_default().to_string(),
                report.trials.to_string(),
                report.seed.to_string(),
                report.type1.estimate.to_string(),
                report.type1.lo.to_string(),
                report.type1.hi.to_string(),
                report.type2.estimate.to_string(),
                report.type2.lo.to_string(),
                report.type2.hi.to_string(),
                report.risk.to_string(),
                u8::from(report.degenerate).to_string(),
            ])
            .map_err(csv_err)?;
            finish_csv(w)?
        }
    };
    emit(args.out.as_deref(), &body)?;
    write_sidecar(args.out.as_deref(), "simulate", cfg.seed, &cfg, started)
}

pub const SWEEP_HEADER: [&str; 17] = [
    "a",
    "beta",
    "multiplier",
    "p",
    "n",
    "s",
    "rho",
    "type1",
    "type1_lo",
    "type1_hi",
    "type2",
    "type2_lo",
    "type2_hi",
    "risk",
    "saturated_flag",
    "a_eff",
    "beta_eff",
];

fn opt(v: Option<f64>) -> String {
    v.filter(|x| x.is_finite()).map(|x| x.to_string()).unwrap_or_default()
}

pub fn sweep_csv(points: &[PhasePoint]) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SWEEP_HEADER).map_err(csv_err)?;
    for pt in points {
        w.write_record([
            pt.a.to_string(),
            pt.beta.to_string(),
            pt.multiplier.to_string(),
            pt.p.to_string(),
            pt.n.to_string(),
            pt.s.to_string(),
            pt.rho.to_string(),
            pt.type1.estimate.to_string(),
            pt.type1.lo.to_string(),
            pt.type1.hi.to_string(),
            pt.type2.estimate.to_string(),
            pt.type2.lo.to_string(),
            pt.type2.hi.to_string(),
            pt.risk.to_string(),
            u8::from(pt.saturated).to_string(),
            opt(pt.a_eff),
            opt(Some(pt.beta_eff)),
        ])
        .map_err(csv_err)?;
    }
    finish_csv(w)
}

pub fn cmd_sweep(args: &RunArgs) -> Result<(), CliError> {
    let plan = plan_from_args(args)?;
    let started = (SystemTime::now(), Instant::now());
    let points = phase_sweep(&plan)?;
    let body = match args.format {
        Format::Csv => sweep_csv(&points)?,
        Format::Json => to_json(&SweepReport {
            schema_version: SCHEMA_VERSION,
            plan: &plan,
            points: &points,
        })?,
    };
    emit(args.out.as_deref(), &body)?;
    write_sidecar(args.out.as_deref(), "sweep", plan.seed, &plan, started)
}

#[derive(Serialize)]
struct SweepReport<'a> {
    schema_version: u32,
    plan: &'a PhasePlan,
    points: &'a [PhasePoint],
}

#[derive(Serialize)]
struct Timestamp {
    started_unix_s: f64,
    wall_time_s: f64,
}

#[derive(Serialize)]
struct Metadata<'a, C: Serialize> {
    schema_version: u32,
    command: &'a str,
    tool_version: &'a str,
    seed: u64,
    config: &'a C,
    /// The only field that differs between reruns with the same seed.
    timestamp: Timestamp,
}

/// Path of the metadata file written next to `out`.
pub fn sidecar_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".meta.json");
    out.with_file_name(name)
}

fn write_sidecar<C: Serialize>(
    out: Option<&Path>,
    command: &str,
    seed: u64,
    config: &C,
    started: (SystemTime, Instant),
) -> Result<(), CliError> {
    let Some(out) = out else {
        return Ok(());
    };
    let meta = Metadata {
        schema_version: SCHEMA_VERSION,
        command,
        tool_version: env!("CARGO_PKG_VERSION"),
        seed,
        config,
        timestamp: Timestamp {
            started_unix_s: started.0.duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64()),
            wall_time_s: started.1.elapsed().as_secs_f64(),
        },
    };
    fs::write(sidecar_path(out), to_json(&meta)?)?;
    Ok(())
}

fn to_json<T: Serialize>(v: &T) -> Result<String, CliError> {
    let mut s = serde_json::to_string_pretty(v).map_err(json_err)?;
    s.push('\n');
    Ok(s)
}

fn json_err(e: serde_json::Error) -> CliError {
    CliError::Numeric(format!("cannot serialize report: {e}"))
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Io(std::io::Error::other(e))
}

fn finish_csv(w: csv::Writer<Vec<u8>>) -> Result<String, CliError> {
    let bytes = w.into_inner().map_err(|e| CliError::Io(std::io::Error::other(e.to_string())))?;
    String::from_utf8(bytes).map_err(|e| CliError::Io(std::io::Error::other(e)))
}

fn emit(out: Option<&Path>, body: &str) -> Result<(), CliError> {
    match out {
        Some(path) => fs::write(path, body)?,
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(body.as_bytes())?;
            stdout.flush()?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Input("x".into()).exit_code(), 2);
        assert_eq!(CliError::Config(vec![]).exit_code(), 2);
        assert_eq!(CliError::from(SimError::LikelihoodRatioNotRepresentable(f64::INFINITY)).exit_code(), 3);
    }

    #[test]
    fn sidecar_sits_next_to_output() {
        assert_eq!(sidecar_path(Path::new("/tmp/run/out.csv")), Path::new("/tmp/run/out.csv.meta.json"));
    }

    #[test]
    fn empty_sweep_is_header_only() {
        let csv = sweep_csv(&[]).unwrap();
        assert_eq!(csv.lines().count(), 1);
        assert!(csv.starts_with("a,beta,multiplier,p,n,s,rho,type1,type1_lo,type1_hi,type2"));
    }

    #[test]
    fn one_by_two_matrix_uses_the_single_split() {
        let x = cpdetect_core::ObservationMatrix::new(1, 2, vec![0.0, 0.0]).unwrap();
        let r = detect_report(&x, Side::One, 2.0, DeltaRule::Auto).unwrap();
        assert_eq!(r.grid_size, 1);
        assert_eq!(r.pbj.argmax_t, 1);
        // a single row collapses both thresholds to zero
        assert_eq!((r.pbj.threshold, r.max.threshold), (0.0, 0.0));
        assert!((r.pbj.statistic - 2f64.ln()).abs() < 1e-12);
        assert_eq!(r.combined_reject, r.pbj.reject || r.max.reject);
    }

    #[test]
    fn cli_parses() {
        let cli = Cli::try_parse_from(["cpdetect", "sweep", "--preset", "phase-demo", "--trials", "5", "--format", "csv"])
            .unwrap();
        let Command::Sweep(args) = cli.command else {
            panic!("wrong subcommand")
        };
        let plan = plan_from_args(&args).unwrap();
        assert_eq!(plan.trials, 5);
        assert!(Cli::try_parse_from(["cpdetect", "simulate"]).is_err());
        assert!(Cli::try_parse_from(["cpdetect", "boundary", "--a", "0.5", "--beta", "1", "--p", "9", "--regime2"]).is_ok());
    }
}
