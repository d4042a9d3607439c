//! Command-line front end.
//!
//! Subcommands (one verb per library capability):
//! - `analyze`: thermodynamic grid for a model file → CSV.
//! - `scan`: temperature scan for phase-transition candidates → CSV + JSON.
//! - `simulate`: kinetic exchange run → histogram CSV + metadata JSON.
//! - `verify`: cross-check suite; exit 2 names any failing check.
//! - `eval`: parse and evaluate a money-function expression at a point.
//!
//! Exit codes: 0 success, 1 validation or model error, 2 verification failure.
//! Every run is deterministic given its flags; the only environment input is
//! the optional `ECOTHERM_SEED` override for `simulate`.

pub mod model_file;
pub mod report;
pub mod verify;

use std::io::Write as _;
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use crate::catalog::Family;
use crate::exchange::{init_ensemble, ExchangeRule, InitDist};
use crate::expr;
use crate::phase;
use crate::quadrature::DEFAULT_REL_TOL;
use crate::thermo::{self, ThermoOpts};

pub use model_file::{load_model, parse_model, ModelFileError};

#[derive(Debug, Parser)]
#[command(
    name = "ecotherm",
    about = "Thermodynamic analysis of economic models: partition functions, \
             entropy, phase scans, and kinetic exchange simulations",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Evaluate the thermodynamic state on a temperature grid (CSV)
    Analyze(AnalyzeArgs),
    /// Scan a temperature range for phase-transition candidates (CSV + JSON)
    Scan(ScanArgs),
    /// Run a kinetic exchange simulation (histogram CSV + metadata JSON)
    Simulate(SimulateArgs),
    /// Run the cross-check suite; prints one PASS/FAIL line per check
    Verify(VerifyArgs),
    /// Parse a money-function expression and evaluate it at a point
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    /// JSON model file
    #[arg(long)]
    model: PathBuf,
    /// Lowest temperature of the grid
    #[arg(long)]
    t_min: f64,
    /// Highest temperature (defaults to --t-min: a single point)
    #[arg(long)]
    t_max: Option<f64>,
    /// Number of grid points
    #[arg(long, default_value_t = 1)]
    steps: usize,
    /// Relative quadrature tolerance
    #[arg(long, default_value_t = DEFAULT_REL_TOL)]
    rel_tol: f64,
    /// Evaluate inside the near-critical guard band instead of refusing
    #[arg(long)]
    allow_near_critical: bool,
    /// Output CSV path (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ScanArgs {
    /// JSON model file
    #[arg(long)]
    model: PathBuf,
    /// Lowest temperature of the scan
    #[arg(long)]
    t_min: f64,
    /// Highest temperature of the scan
    #[arg(long)]
    t_max: f64,
    /// Number of grid points
    #[arg(long, default_value_t = 100)]
    steps: usize,
    /// Grid CSV path (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Events JSON path (stdout when omitted)
    #[arg(long)]
    events: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Number of agents N
    #[arg(long, default_value_t = 10_000)]
    agents: usize,
    /// Total conserved money M
    #[arg(long, default_value_t = 10_000.0)]
    total: f64,
    /// Exchange rule: uniform_pair, fixed_transfer, multiplicative_save
    #[arg(long, default_value = "uniform_pair")]
    rule: String,
    /// Transfer amount (fixed_transfer only)
    #[arg(long)]
    amount: Option<f64>,
    /// Saving fraction in [0, 1] (multiplicative_save only)
    #[arg(long)]
    saving: Option<f64>,
    /// Number of exchange steps
    #[arg(long, default_value_t = 1_000_000)]
    steps: u64,
    /// RNG seed (ECOTHERM_SEED overrides)
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Initial allocation: equal or random
    #[arg(long, default_value = "equal")]
    init: String,
    /// Histogram bin count
    #[arg(long, default_value_t = 100)]
    bins: usize,
    /// Histogram CSV path (stdout when omitted)
    #[arg(long)]
    hist: Option<PathBuf>,
    /// Metadata JSON path (stdout when omitted)
    #[arg(long)]
    meta: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    /// Restrict to checks touching one family tag, or "all"
    #[arg(long, default_value = "all")]
    family: String,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Money-function expression, e.g. "c1*l1^2 + ln(l2)"
    #[arg(long)]
    expr: String,
    /// Evaluation point, comma-separated: --at 1.5,2.0
    #[arg(long)]
    at: String,
    /// Constant binding, repeatable: --constant c1=2
    #[arg(long = "constant")]
    constants: Vec<String>,
}

/// Entry point used by both `main` and the integration tests.
/// Returns the process exit code.
pub fn run_command<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Analyze(args) => cmd_analyze(args),
        Command::Scan(args) => cmd_scan(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Verify(args) => cmd_verify(args),
        Command::Eval(args) => cmd_eval(args),
    };
    match result {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            1
        }
    }
}

fn write_out(path: Option<&PathBuf>, content: &str) -> Result<(), String> {
    match path {
        Some(path) => std::fs::write(path, content)
            .map_err(|e| format!("cannot write {}: {e}", path.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(content.as_bytes())
                .map_err(|e| format!("cannot write to stdout: {e}"))
        }
    }
}

fn cmd_analyze(args: AnalyzeArgs) -> Result<i32, String> {
    let model = load_model(&args.model).map_err(|e| e.to_string())?;
    let t_max = args.t_max.unwrap_or(args.t_min);
    if !(args.t_min > 0.0) || t_max < args.t_min {
        return Err(format!(
            "temperature grid requires 0 < t_min <= t_max, got [{}, {t_max}]",
            args.t_min
        ));
    }
    if args.steps == 0 || (args.steps > 1 && t_max == args.t_min) {
        return Err(format!(
            "inconsistent grid: {} steps on [{}, {t_max}]",
            args.steps, args.t_min
        ));
    }
    let opts = ThermoOpts {
        rel_tol: args.rel_tol,
        allow_near_critical: args.allow_near_critical,
    };
    let mut states = Vec::with_capacity(args.steps);
    for i in 0..args.steps {
        let t = if args.steps == 1 {
            args.t_min
        } else {
            args.t_min + (t_max - args.t_min) * i as f64 / (args.steps - 1) as f64
        };
        let state = thermo::thermo_state(&model, t, &opts)
            .map_err(|e| format!("at T = {t}: {e}"))?;
        states.push(state);
    }
    write_out(args.out.as_ref(), &report::thermo_grid_csv(&model, &states))?;
    Ok(0)
}

fn cmd_scan(args: ScanArgs) -> Result<i32, String> {
    let model = load_model(&args.model).map_err(|e| e.to_string())?;
    let scan = phase::scan_temperature(&model, args.t_min, args.t_max, args.steps)?;
    write_out(args.out.as_ref(), &report::scan_grid_csv(&model, &scan))?;
    write_out(args.events.as_ref(), &report::scan_events_json(&scan))?;
    Ok(0)
}

fn cmd_simulate(args: SimulateArgs) -> Result<i32, String> {
    let rule = match args.rule.as_str() {
        "uniform_pair" => ExchangeRule::UniformPair,
        "fixed_transfer" => ExchangeRule::FixedTransfer {
            amount: args
                .amount
                .ok_or("fixed_transfer requires --amount")?,
        },
        "multiplicative_save" => ExchangeRule::MultiplicativeSave {
            saving: args
                .saving
                .ok_or("multiplicative_save requires --saving")?,
        },
        other => {
            return Err(format!(
                "unknown rule `{other}` (expected uniform_pair, fixed_transfer, \
                 or multiplicative_save)"
            ))
        }
    };
    let init = match args.init.as_str() {
        "equal" => InitDist::Equal,
        "random" => InitDist::Random,
        other => return Err(format!("unknown init `{other}` (expected equal or random)")),
    };
    let seed = match std::env::var("ECOTHERM_SEED") {
        Ok(text) => text
            .parse::<u64>()
            .map_err(|_| format!("ECOTHERM_SEED must be a nonnegative integer, got `{text}`"))?,
        Err(_) => args.seed,
    };
    let mut ensemble =
        init_ensemble(args.agents, args.total, rule, seed, init).map_err(|e| e.to_string())?;
    ensemble.run(args.steps);
    let fit = ensemble.fit_boltzmann().map_err(|e| e.to_string())?;
    let hist = ensemble.histogram(args.bins).map_err(|e| e.to_string())?;
    write_out(args.hist.as_ref(), &report::histogram_csv(&hist))?;
    write_out(
        args.meta.as_ref(),
        &report::simulation_meta_json(&ensemble, &fit),
    )?;
    Ok(0)
}

fn cmd_verify(args: VerifyArgs) -> Result<i32, String> {
    let filter = match args.family.as_str() {
        "all" => None,
        tag => Some(Family::from_tag(tag).ok_or_else(|| {
            format!(
                "unknown family `{tag}` (expected all or one of: {})",
                Family::ALL.map(|f| f.tag()).join(", ")
            )
        })?),
    };
    let mut stdout = std::io::stdout().lock();
    let failures = verify::run_suite(filter, &mut stdout);
    if failures.is_empty() {
        Ok(0)
    } else {
        let _ = writeln!(stdout, "{} check(s) failed: {}", failures.len(), failures.join(", "));
        Ok(2)
    }
}

fn cmd_eval(args: EvalArgs) -> Result<i32, String> {
    let point: Vec<f64> = args
        .at
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| format!("malformed coordinate `{s}` in --at"))
        })
        .collect::<Result<_, _>>()?;
    let mut constants = std::collections::BTreeMap::new();
    for binding in &args.constants {
        let (name, value) = binding
            .split_once('=')
            .ok_or_else(|| format!("constant binding `{binding}` is not of the form name=value"))?;
        let value = value
            .parse::<f64>()
            .map_err(|_| format!("malformed constant value in `{binding}`"))?;
        constants.insert(name.trim().to_string(), value);
    }
    let parsed = expr::parse_money_fn(&args.expr, point.len()).map_err(|e| e.to_string())?;
    let value = expr::eval_money_fn(&parsed, &point, &|name| constants.get(name).copied())
        .map_err(|e| e.to_string())?;
    println!("{}", report::fmt_real(value));
    Ok(0)
}
