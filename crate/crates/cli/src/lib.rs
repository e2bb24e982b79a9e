//! The `smartnie` command line: planning, analysis and simulation of
//! two-stage SMARTs.
//!
//! Each subcommand resolves its inputs (flags, then `--config` file, then
//! defaults) into the same request documents the HTTP service accepts and
//! calls the same functions, so both front ends print identical numbers.

mod config;
mod render;

use std::ffi::OsString;
use std::io::Write;
use std::net::SocketAddr;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use smartnie_core::planning::TestMode;
use smartnie_core::trial_file::parse_trial_csv;
use smartnie_core::{AiPair, EmbeddedAi, Path, Probability, RandomizationProbs};
use smartnie_service::{
    curve, plan, power, presets, run_analysis, simulate, ApiError, CurveRequest, McSpec, PlanRequest, PowerRequest,
    ServiceConfig, SimulateRequest, DEFAULT_REPS_CAP,
};

pub use config::RunConfig;
pub use render::{curve_csv, parse_report, render_report, CURVE_HEADER};

/// Seed used when neither `--seed`, `SMARTNIE_SEED` nor the config sets one.
pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_REPS: u64 = 1000;
pub const DEFAULT_CURVE_N: [u64; 4] = [100, 200, 300, 500];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum Format {
    #[default]
    Text,
    Json,
}

#[derive(Debug)]
pub enum CliError {
    /// Bad invocation; exit code 2.
    Usage(String),
    /// Invalid data or failed validation; exit code 1.
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 1,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) => m,
        }
    }
}

impl From<ApiError> for CliError {
    fn from(e: ApiError) -> Self {
        match e.code.as_str() {
            "missing_field" | "conflicting_inputs" => CliError::Usage(e.message),
            _ => CliError::Data(e.message),
        }
    }
}

impl From<smartnie_core::Error> for CliError {
    fn from(e: smartnie_core::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "smartnie", version, about = "Non-inferiority and equivalence planning and analysis for two-stage SMARTs")]
struct Cli {
    /// TOML file supplying defaults for any flag.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Minimum total sample size for the target power.
    Samplesize(PlanFlags),
    /// Power at a fixed total sample size.
    Power(PowerFlags),
    /// Analyze a trial CSV.
    Analyze(AnalyzeFlags),
    /// Monte Carlo power or Type-I error of a preset scenario.
    Simulate(SimulateFlags),
    /// Power-curve table as CSV.
    Curves(CurveFlags),
    /// List the built-in scenario presets.
    Presets,
    /// Run the HTTP service.
    Serve(ServeFlags),
}

#[derive(Debug, Args)]
struct PlanFlags {
    #[arg(long)]
    mode: Option<TestMode>,
    #[arg(long)]
    path: Option<Path>,
    /// Overall standardized effect `η_θ − η_δ`.
    #[arg(long, allow_hyphen_values = true)]
    eta: Option<f64>,
    #[arg(long)]
    eta_theta: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    eta_delta: Option<f64>,
    /// True difference control − new (0 when planning from effect sizes).
    #[arg(long, allow_hyphen_values = true)]
    delta: Option<f64>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    control: Option<EmbeddedAi>,
    #[arg(long)]
    new: Option<EmbeddedAi>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    /// Expected dropout fraction; also reports the inflated N.
    #[arg(long)]
    dropout: Option<f64>,
}

#[derive(Debug, Args)]
struct PowerFlags {
    #[command(flatten)]
    plan: PlanFlags,
    #[arg(long)]
    n: Option<u64>,
}

#[derive(Debug, Args)]
struct AnalyzeFlags {
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    mode: Option<TestMode>,
    #[arg(long)]
    control: Option<EmbeddedAi>,
    #[arg(long)]
    new: Option<EmbeddedAi>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    pi_a: Option<f64>,
    #[arg(long)]
    pi_a_v: Option<f64>,
    #[arg(long)]
    pi_ac_v: Option<f64>,
}

#[derive(Debug, Args)]
struct SeedFlags {
    #[arg(long, env = "SMARTNIE_SEED")]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct SimulateFlags {
    #[arg(long)]
    preset: Option<String>,
    /// 1-based preset row.
    #[arg(long)]
    row: Option<usize>,
    /// Sample size; defaults to the row's reference N.
    #[arg(long)]
    n: Option<u64>,
    #[arg(long)]
    reps: Option<u64>,
    #[command(flatten)]
    seed: SeedFlags,
    /// Unequal per-cell SDs drawn for each replication.
    #[arg(long)]
    robust: bool,
}

#[derive(Debug, Args)]
struct CurveFlags {
    #[arg(long)]
    mode: Option<TestMode>,
    #[arg(long)]
    path: Option<Path>,
    /// Preset whose scenarios form the grid (default `power_curve`).
    #[arg(long)]
    preset: Option<String>,
    /// Explicit non-inferiority grid of η values.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    eta: Option<Vec<f64>>,
    /// Explicit equivalence grid: η(θ) values, paired with `--eta-delta`.
    #[arg(long, value_delimiter = ',')]
    eta_theta: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    eta_delta: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<u64>>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Monte Carlo replications per grid point; omitted means analytic only.
    #[arg(long)]
    reps: Option<u64>,
    #[command(flatten)]
    seed: SeedFlags,
    /// Output file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ServeFlags {
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    /// Directory of UI assets to serve.
    #[arg(long)]
    static_dir: Option<PathBuf>,
    /// Allowed cross-origin caller; repeatable. Defaults to the service's own origin.
    #[arg(long)]
    cors_origin: Vec<String>,
    #[arg(long, default_value_t = DEFAULT_REPS_CAP)]
    reps_cap: u64,
}

fn probability(name: &str, x: f64) -> Result<Probability, CliError> {
    Probability::new(x).map_err(|e| CliError::Data(format!("{name}: {e}")))
}

fn plan_request(f: &PlanFlags, cfg: &RunConfig) -> Result<PlanRequest, CliError> {
    let mode = f
        .mode
        .or(cfg.mode)
        .ok_or_else(|| CliError::Usage("--mode is required (ni or eq)".into()))?;
    let mut r = PlanRequest::new(mode);
    r.path = f.path.or(cfg.path);
    // Effect sizes given on the command line replace the file's effect
    // sizes and design as a group, so the two sources never mix.
    if f.eta.is_some() || f.eta_theta.is_some() || f.eta_delta.is_some() {
        r.eta = f.eta;
        r.eta_theta = f.eta_theta;
        r.eta_delta = f.eta_delta;
    } else {
        r.eta = cfg.eta;
        r.eta_theta = cfg.eta_theta;
        r.eta_delta = cfg.eta_delta;
        r.design = cfg.design;
    }
    r.control = f.control.or(cfg.control);
    r.new = f.new.or(cfg.new);
    r.theta = f.theta.or(cfg.theta);
    r.delta = f.delta.or(cfg.delta);
    if let Some(a) = f.alpha.or(cfg.alpha) {
        r.alpha = probability("alpha", a)?;
    }
    if let Some(b) = f.beta.or(cfg.beta) {
        r.beta = probability("beta", b)?;
    }
    r.dropout = f.dropout.or(cfg.dropout);
    Ok(r)
}

fn emit_json<T: Serialize>(out: &mut dyn Write, value: &T) -> Result<(), CliError> {
    let s = serde_json::to_string_pretty(value).map_err(|e| CliError::Data(e.to_string()))?;
    writeln!(out, "{s}")?;
    Ok(())
}

fn cmd_samplesize(f: &PlanFlags, cfg: &RunConfig, format: Format, out: &mut dyn Write) -> Result<(), CliError> {
    let resp = plan(&plan_request(f, cfg)?)?;
    match format {
        Format::Json => emit_json(out, &resp),
        Format::Text => {
            writeln!(out, "N={}", resp.n)?;
            writeln!(out, "achieved_power={:.4}", resp.achieved_power)?;
            if let Some(n) = resp.n_inflated {
                writeln!(out, "N_inflated={n}")?;
            }
            Ok(())
        }
    }
}

fn cmd_power(f: &PowerFlags, cfg: &RunConfig, format: Format, out: &mut dyn Write) -> Result<(), CliError> {
    let n = f.n.or(cfg.n).ok_or_else(|| CliError::Usage("--n is required".into()))?;
    let resp = power(&PowerRequest {
        plan: plan_request(&f.plan, cfg)?,
        n,
    })?;
    match format {
        Format::Json => emit_json(out, &resp),
        Format::Text => {
            writeln!(out, "power={:.4}", resp.power)?;
            Ok(())
        }
    }
}

fn cmd_analyze(f: &AnalyzeFlags, cfg: &RunConfig, format: Format, out: &mut dyn Write) -> Result<(), CliError> {
    let data = f
        .data
        .clone()
        .or_else(|| cfg.data.clone())
        .ok_or_else(|| CliError::Usage("--data is required".into()))?;
    let mode = f.mode.or(cfg.mode).ok_or_else(|| CliError::Usage("--mode is required".into()))?;
    let (control, new) = match (f.control.or(cfg.control), f.new.or(cfg.new)) {
        (Some(c), Some(n)) => (c, n),
        _ => return Err(CliError::Usage("--control and --new are required".into())),
    };
    let theta = f.theta.or(cfg.theta).ok_or_else(|| CliError::Usage("--theta is required".into()))?;
    let alpha = probability("alpha", f.alpha.or(cfg.alpha).unwrap_or(0.05))?;
    let probs = RandomizationProbs::new(
        f.pi_a.or(cfg.pi_a).unwrap_or(0.5),
        f.pi_a_v.or(cfg.pi_a_v).unwrap_or(0.5),
        f.pi_ac_v.or(cfg.pi_ac_v).unwrap_or(0.5),
    )?;
    let records = parse_trial_csv(&data)?;
    let report = run_analysis(&records, mode, AiPair::new(control, new)?, theta, alpha, &probs)?;
    write!(out, "{}", render_report(&report, format))?;
    Ok(())
}

fn cmd_simulate(f: &SimulateFlags, cfg: &RunConfig, format: Format, out: &mut dyn Write) -> Result<(), CliError> {
    let preset = f
        .preset
        .clone()
        .or_else(|| cfg.preset.clone())
        .ok_or_else(|| CliError::Usage("--preset is required".into()))?;
    let req = SimulateRequest {
        preset: Some(preset),
        row: f.row.or(cfg.row).unwrap_or(1),
        scenario: None,
        mode: None,
        path: None,
        n: f.n.or(cfg.n),
        reps: f.reps.or(cfg.reps).unwrap_or(DEFAULT_REPS),
        seed: f.seed.seed.or(cfg.seed).unwrap_or(DEFAULT_SEED),
        robust: f.robust || cfg.robust.unwrap_or(false),
    };
    let resp = simulate(&req, u64::MAX)?;
    match format {
        Format::Json => emit_json(out, &resp),
        Format::Text => {
            writeln!(
                out,
                "{} = {:.4} ± {:.4} (reps={}, seed={}, n={})",
                resp.metric, resp.estimate, resp.se, resp.reps, resp.seed, resp.n
            )?;
            let reference = resp.reference.and_then(|r| match (resp.metric.as_str(), req.robust) {
                ("type1_rate", _) => r.type1_rate,
                (_, true) => r.power_robust,
                _ => r.power,
            });
            if let Some(r) = reference {
                writeln!(out, "reference = {r}")?;
            }
            Ok(())
        }
    }
}

fn cmd_curves(f: &CurveFlags, cfg: &RunConfig, format: Format, out: &mut dyn Write) -> Result<(), CliError> {
    let mode = f.mode.or(cfg.mode).unwrap_or(TestMode::Ni);
    let n_list = f
        .n
        .clone()
        .or_else(|| cfg.n_list.clone())
        .unwrap_or_else(|| DEFAULT_CURVE_N.to_vec());
    let explicit = f.eta.is_some() || f.eta_theta.is_some() || f.eta_delta.is_some();
    let points = match (&f.eta_theta, &f.eta_delta) {
        (Some(t), Some(d)) if t.len() == d.len() => Some(t.iter().copied().zip(d.iter().copied()).collect()),
        (Some(t), None) => Some(t.iter().map(|&x| (x, 0.0)).collect()),
        (None, None) => None,
        _ => return Err(CliError::Usage("--eta-theta and --eta-delta must have equal lengths".into())),
    };
    let preset = match (&f.preset, explicit) {
        (Some(_), true) => return Err(CliError::Usage("give either --preset or an explicit grid".into())),
        (Some(p), false) => Some(p.clone()),
        (None, true) => None,
        (None, false) => Some(cfg.preset.clone().unwrap_or_else(|| "power_curve".into())),
    };
    let mc = f.reps.or(cfg.reps).map(|reps| McSpec {
        reps,
        seed: f.seed.seed.or(cfg.seed).unwrap_or(DEFAULT_SEED),
    });
    let req = CurveRequest {
        mode,
        path: f.path.or(cfg.path).unwrap_or(Path::Distinct),
        n_list,
        eta: f.eta.clone(),
        points,
        preset,
        alpha: probability("alpha", f.alpha.or(cfg.alpha).unwrap_or(0.05))?,
        mc,
    };
    let resp = curve(&req, u64::MAX)?;
    let body = match format {
        Format::Text => curve_csv(&resp.rows),
        Format::Json => {
            let mut s = serde_json::to_string_pretty(&resp).map_err(|e| CliError::Data(e.to_string()))?;
            s.push('\n');
            s
        }
    };
    // Everything is computed before the output file is touched.
    match &f.out {
        Some(path) => std::fs::write(path, body)?,
        None => out.write_all(body.as_bytes())?,
    }
    Ok(())
}

fn cmd_presets(format: Format, out: &mut dyn Write) -> Result<(), CliError> {
    let resp = presets()?;
    match format {
        Format::Json => emit_json(out, &resp),
        Format::Text => {
            for p in &resp.presets {
                writeln!(out, "{:<16}{:<4}{:<10}{:>3} rows  {}", p.name, p.mode, p.path, p.rows.len(), p.description)?;
            }
            Ok(())
        }
    }
}

fn cmd_serve(f: &ServeFlags) -> Result<(), CliError> {
    let addr: SocketAddr = format!("{}:{}", f.host, f.port)
        .parse()
        .map_err(|e| CliError::Usage(format!("invalid address: {e}")))?;
    let cors_origins = if f.cors_origin.is_empty() {
        vec![format!("http://{addr}"), format!("http://localhost:{}", f.port)]
    } else {
        f.cors_origin.clone()
    };
    let config = ServiceConfig {
        reps_cap: f.reps_cap,
        cors_origins,
        static_dir: f.static_dir.clone(),
    };
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(smartnie_service::serve(addr, config))?;
    Ok(())
}

fn dispatch(cli: &Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let format = cli.format.unwrap_or_default();
    match &cli.command {
        Command::Samplesize(f) => cmd_samplesize(f, &cfg, format, out),
        Command::Power(f) => cmd_power(f, &cfg, format, out),
        Command::Analyze(f) => cmd_analyze(f, &cfg, format, out),
        Command::Simulate(f) => cmd_simulate(f, &cfg, format, out),
        Command::Curves(f) => cmd_curves(f, &cfg, format, out),
        Command::Presets => cmd_presets(format, out),
        Command::Serve(f) => cmd_serve(f),
    }
}

/// Parses `args` (including the program name), runs the subcommand and
/// returns the process exit code: 0 success, 1 data or validation error,
/// 2 usage error.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            let _ = if code == 0 {
                write!(out, "{text}")
            } else {
                write!(err, "{text}")
            };
            return if code == 0 { 0 } else { 2 };
        }
    };
    match dispatch(&cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {}", e.message());
            e.exit_code()
        }
    }
}
