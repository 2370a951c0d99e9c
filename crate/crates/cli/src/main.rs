//! `diqkd` command-line front end.
//!
//! Exit codes: 0 success, 2 invalid input, 3 numerical failure.

mod output;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use diqkd::bell::{build_named, inequality_from_json, local_bound_with, BellInequality};
use diqkd::ncpoly::verify_chsh_sos;
use diqkd::npa::Level;
use diqkd::protocol::{run, ProtocolConfig};
use diqkd::quantum::{NoiseModel, Preset};
use diqkd::rate::{
    build_curve_with, critical_visibility, curve_range, linspace, preset_rate, CurveOptions, CurveSource,
    TradeoffCurve, TSIRELSON,
};
use diqkd::{Error, Execution};
use serde::Serialize;

use output::{emit, num, Csv};

/// Largest acceptable coefficient in the sum-of-squares residual.
const SOS_TOLERANCE: f64 = 1e-12;

#[derive(Debug)]
pub struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn invalid(message: impl Into<String>) -> Self {
        CliError { code: 2, message: message.into() }
    }

    fn numerical(message: impl Into<String>) -> Self {
        CliError { code: 3, message: message.into() }
    }

    fn io(e: std::io::Error) -> Self {
        CliError::invalid(format!("i/o error: {e}"))
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Infeasible { .. } | Error::NotConverged { .. } | Error::Numerical(_) => {
                CliError::numerical(e.to_string())
            }
            _ => CliError::invalid(e.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(name = "diqkd", version, about = "Device-independent QKD analysis")]
struct Cli {
    /// Worker threads for parallel sweeps (default: all cores).
    #[arg(long, global = true, env = "DIQKD_THREADS")]
    threads: Option<usize>,
    /// Run every sweep sequentially.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Tradeoff curve f(g) with one affine certificate per grid point.
    Curve(CurveArgs),
    /// Key rate against visibility for a reference device.
    Keyrate(KeyrateArgs),
    /// Monte Carlo run of the full protocol.
    Simulate(SimulateArgs),
    /// Check the CHSH sum-of-squares identity.
    VerifySos(SosArgs),
    /// Local bound of an inequality file by strategy enumeration.
    LocalBound(LocalBoundArgs),
}

#[derive(Clone, Copy, Debug, Serialize, ValueEnum)]
enum LevelArg {
    #[value(name = "1")]
    #[serde(rename = "1")]
    One,
    #[value(name = "1ab")]
    #[serde(rename = "1ab")]
    OneAb,
    #[value(name = "2")]
    #[serde(rename = "2")]
    Two,
}

impl From<LevelArg> for Level {
    fn from(l: LevelArg) -> Level {
        match l {
            LevelArg::One => Level::One,
            LevelArg::OneAb => Level::OneAB,
            LevelArg::Two => Level::Two,
        }
    }
}

#[derive(Args, Serialize)]
struct SourceArgs {
    /// Closed-form CHSH curve instead of the relaxation.
    #[arg(long, conflicts_with = "level")]
    analytic: bool,
    /// Relaxation level (default: 2 for binary outcomes, 1ab otherwise).
    #[arg(long, value_enum)]
    level: Option<LevelArg>,
    /// Number of curve grid points.
    #[arg(long, default_value_t = 50, value_parser = clap::value_parser!(u64).range(2..))]
    points: u64,
}

impl SourceArgs {
    fn source(&self, ineq: &BellInequality) -> CurveSource {
        if self.analytic {
            CurveSource::AnalyticChsh
        } else {
            CurveSource::Sdp(self.level.map_or_else(|| Level::default_for(ineq), Level::from))
        }
    }
}

#[derive(Args, Serialize)]
struct CurveArgs {
    /// Named inequality: chsh, chainedN, cglmp3.
    #[arg(long, required_unless_present = "file", conflicts_with = "file")]
    ineq: Option<String>,
    /// Inequality in the sparse JSON format.
    #[arg(long)]
    file: Option<PathBuf>,
    #[command(flatten)]
    source: SourceArgs,
    /// Alice's key-generating input (default: the reference device's, else 0).
    #[arg(long)]
    x_raw: Option<usize>,
    /// Lower end of the grid (default: local bound).
    #[arg(long)]
    g_min: Option<f64>,
    /// Upper end of the grid (default: quantum maximum).
    #[arg(long)]
    g_max: Option<f64>,
    /// Output file; a manifest is written beside it.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct KeyrateArgs {
    /// Reference device: chsh, chainedN, cglmp3.
    #[arg(long, default_value = "chsh")]
    ineq: String,
    #[command(flatten)]
    source: SourceArgs,
    #[arg(long, default_value_t = 0.85)]
    v_min: f64,
    #[arg(long, default_value_t = 1.0)]
    v_max: f64,
    /// Number of visibility samples.
    #[arg(long, default_value_t = 31, value_parser = clap::value_parser!(u64).range(2..))]
    steps: u64,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct SimulateArgs {
    /// Reference device: chsh, chainedN, cglmp3.
    #[arg(long, default_value = "chsh")]
    preset: String,
    /// Visibility of the shared state.
    #[arg(long)]
    v: f64,
    /// Raw-key rounds.
    #[arg(long = "N")]
    n: u64,
    #[arg(long)]
    seed: u64,
    /// Estimation rounds (default: round(sqrt(N))).
    #[arg(long = "Nest")]
    n_est: Option<u64>,
    /// Finite-size margin in bits (default: ceil(2 sqrt(N))).
    #[arg(long)]
    slack: Option<u64>,
    /// Relaxation level for the curve (default: closed form for CHSH).
    #[arg(long, value_enum)]
    level: Option<LevelArg>,
    /// Curve grid points for relaxation-based curves.
    #[arg(long, default_value_t = 50, value_parser = clap::value_parser!(u64).range(2..))]
    points: u64,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct SosArgs {
    /// Single linearization point in [2, 2√2).
    #[arg(long, conflicts_with = "grid")]
    g0: Option<f64>,
    /// Number of points on [2, 2√2 − 1e-3].
    #[arg(long, default_value_t = 50, value_parser = clap::value_parser!(u64).range(1..))]
    grid: u64,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct LocalBoundArgs {
    /// Inequality in the sparse JSON format.
    file: PathBuf,
}

fn load_inequality(name: Option<&str>, file: Option<&PathBuf>) -> Result<BellInequality, CliError> {
    match (name, file) {
        (_, Some(path)) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))?;
            Ok(inequality_from_json(&text)?)
        }
        (Some(name), None) => Ok(build_named(name)?),
        (None, None) => Err(CliError::invalid("either --ineq or --file is required")),
    }
}

fn curve_for(
    ineq: &BellInequality,
    source: CurveSource,
    points: u64,
    x_raw: usize,
    exec: Execution,
) -> Result<TradeoffCurve, CliError> {
    let (lo, hi) = curve_range(ineq, source)?;
    let opts = CurveOptions { x_raw, exec, ..Default::default() };
    Ok(build_curve_with(ineq, source, &linspace(lo, hi, points as usize), opts)?)
}

fn cmd_curve(args: &CurveArgs, exec: Execution) -> Result<(), CliError> {
    let ineq = load_inequality(args.ineq.as_deref(), args.file.as_ref())?;
    let source = args.source.source(&ineq);
    let x_raw = args
        .x_raw
        .or_else(|| args.ineq.as_deref().and_then(|n| Preset::from_name(n).ok()).map(|p| p.raw_inputs().0))
        .unwrap_or(0);
    let (lo, hi) = curve_range(&ineq, source)?;
    let g_min = args.g_min.unwrap_or(lo);
    let g_max = args.g_max.unwrap_or(hi);
    if g_min.is_nan() || g_max.is_nan() || g_min >= g_max {
        return Err(CliError::invalid(format!("empty grid [{g_min}, {g_max}]")));
    }
    let opts = CurveOptions { x_raw, exec, ..Default::default() };
    let curve = build_curve_with(&ineq, source, &linspace(g_min, g_max, args.source.points as usize), opts)?;

    let mut csv = Csv::new(&["g", "g_normalized", "f", "mu", "nu"]);
    for (&(g, f), c) in curve.points.iter().zip(&curve.certificates) {
        csv.row(&[g, (g - lo) / (hi - lo), f, c.mu, c.nu]);
    }
    csv.comment(&format!(
        "{} source={} x_raw={x_raw} g_loc={} g_q={} repaired={}",
        ineq.name,
        source,
        num(lo),
        num(hi),
        curve.repaired
    ));
    emit(&csv.into_string(), args.out.as_deref(), "curve", args, vec![])
}

fn cmd_keyrate(args: &KeyrateArgs, exec: Execution) -> Result<(), CliError> {
    if !(0.0..=1.0).contains(&args.v_min) || !(0.0..=1.0).contains(&args.v_max) || args.v_min >= args.v_max {
        return Err(CliError::invalid(format!("visibility range [{}, {}] must lie in [0, 1]", args.v_min, args.v_max)));
    }
    let preset = Preset::from_name(&args.ineq)?;
    let ineq = preset.inequality()?;
    let source = args.source.source(&ineq);
    let curve = curve_for(&ineq, source, args.source.points, preset.raw_inputs().0, exec)?;

    let mut csv = Csv::new(&["v", "qber", "g", "rate"]);
    for v in linspace(args.v_min, args.v_max, args.steps as usize) {
        let p = preset_rate(&curve, preset, v)?;
        csv.row(&[p.v, p.qber, p.g, p.rate]);
    }
    let crit = critical_visibility(|v| preset_rate(&curve, preset, v), args.v_min, args.v_max)?;
    match (crit.v, crit.qber) {
        (Some(v), Some(q)) => csv.comment(&format!("critical v={} qber={}", num(v), num(q))),
        _ => csv.comment("critical none: the rate does not change sign on the range"),
    }
    emit(&csv.into_string(), args.out.as_deref(), "keyrate", args, vec![])
}

#[derive(Serialize)]
struct SimulationReport {
    preset: String,
    v: f64,
    n_raw: u64,
    n_est: u64,
    seed: u64,
    slack_bits: u64,
    g_est: f64,
    std_error: f64,
    estimate_reliable: bool,
    qber_emp: f64,
    f_at_g: f64,
    h_min_bound: f64,
    n_pub: u64,
    key_len: u64,
    key_prefix_hex: String,
}

fn cmd_simulate(args: &SimulateArgs, exec: Execution) -> Result<(), CliError> {
    let preset = Preset::from_name(&args.preset)?;
    let ineq = preset.inequality()?;
    let source = match (preset, args.level) {
        (Preset::ChshOptimal, None) => CurveSource::AnalyticChsh,
        (_, level) => CurveSource::Sdp(level.map_or_else(|| Level::default_for(&ineq), Level::from)),
    };
    let (x_raw, y_raw) = preset.raw_inputs();
    let curve = match source {
        CurveSource::AnalyticChsh => {
            build_curve_with(&ineq, source, &linspace(2.0, TSIRELSON, args.points as usize), Default::default())?
        }
        CurveSource::Sdp(_) => curve_for(&ineq, source, args.points, x_raw, exec)?,
    };
    let table = preset.device_table(NoiseModel::new(args.v)?)?;
    let mut cfg = ProtocolConfig::new(ineq, table, x_raw, y_raw, args.n, args.seed)?;
    if let Some(k) = args.n_est {
        cfg.n_est = k;
    }
    if let Some(s) = args.slack {
        cfg.slack_bits = s;
    }
    let r = run(&cfg, &curve)?;
    let report = SimulationReport {
        preset: preset.name(),
        v: args.v,
        n_raw: cfg.n_raw,
        n_est: cfg.n_est,
        seed: cfg.seed,
        slack_bits: cfg.slack_bits,
        g_est: r.g_est,
        std_error: r.std_error,
        estimate_reliable: r.estimate_reliable,
        qber_emp: r.qber_emp,
        f_at_g: r.report.f_at_g,
        h_min_bound: r.report.h_min_bound,
        n_pub: r.n_pub,
        key_len: r.key_len,
        key_prefix_hex: r.key_prefix_hex(),
    };
    let mut text = serde_json::to_string_pretty(&report).map_err(|e| CliError::numerical(e.to_string()))?;
    text.push('\n');
    emit(&text, args.out.as_deref(), "simulate", args, vec![args.seed])
}

fn cmd_verify_sos(args: &SosArgs) -> Result<(), CliError> {
    let points = match args.g0 {
        Some(g0) => vec![g0],
        None if args.grid == 1 => vec![2.0],
        None => linspace(2.0, TSIRELSON - 1e-3, args.grid as usize),
    };
    let mut csv = Csv::new(&["g0", "max_residual"]);
    let mut worst: f64 = 0.0;
    for g0 in points {
        let r = verify_chsh_sos(g0)?.max_abs_coefficient();
        worst = worst.max(r);
        csv.row(&[g0, r]);
    }
    csv.comment(&format!("max residual {worst:e}"));
    emit(&csv.into_string(), args.out.as_deref(), "verify-sos", args, vec![])?;
    eprintln!("max residual {worst:e}");
    if worst < SOS_TOLERANCE {
        Ok(())
    } else {
        Err(CliError::numerical(format!("residual {worst:e} exceeds {SOS_TOLERANCE:e}")))
    }
}

fn cmd_local_bound(args: &LocalBoundArgs, exec: Execution) -> Result<(), CliError> {
    let ineq = load_inequality(None, Some(&args.file))?;
    println!("{}", num(local_bound_with(&ineq, exec)?));
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::invalid("thread count must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::invalid(format!("thread pool: {e}")))?;
    }
    let exec = if cli.sequential { Execution::Sequential } else { Execution::Parallel };
    match &cli.command {
        Command::Curve(a) => cmd_curve(a, exec),
        Command::Keyrate(a) => cmd_keyrate(a, exec),
        Command::Simulate(a) => cmd_simulate(a, exec),
        Command::VerifySos(a) => cmd_verify_sos(a),
        Command::LocalBound(a) => cmd_local_bound(a, exec),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
