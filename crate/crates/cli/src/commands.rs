use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use momentarb::conic::{DEFAULT_MAX_ITER, DEFAULT_TOL};
use momentarb::{
    assemble, check_no_arbitrage_with, convex_order_check, find_transition, oracle_bound,
    oracle_feasible, price_bounds_with, Direction, Error as CoreError, MarketInstance,
    SolverSettings, Verdict,
};

use crate::input::{InputError, MarketFile, MeasureFile};
use crate::report::{
    round_significant, CommandResult, ConversionRecord, ErrorReport, InputDigest, ReportFile,
    RunSettings,
};
use crate::target::parse_target;

pub const EXIT_OK: i32 = 0;
pub const EXIT_ARBITRAGE: i32 = 1;
pub const EXIT_INCONCLUSIVE: i32 = 2;
pub const EXIT_INPUT: i32 = 64;

/// Overrides the solver iteration cap.
pub const MAX_ITER_ENV: &str = "MOMENTARB_MAX_ITER";

pub const DEFAULT_GRID: usize = 51;

#[derive(Debug, Parser)]
#[command(
    name = "momentarb",
    version,
    about = "Static arbitrage checks and price bounds for one-period markets"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Test the quoted prices for static arbitrage.
    Check(CheckArgs),
    /// No-arbitrage bounds on the price of a target payoff.
    Bound(BoundArgs),
    /// Feasibility or bounds from the grid linear program.
    Oracle(OracleArgs),
    /// Look for a martingale transition between two measures.
    Martingale(MartingaleArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Check(_) => "check",
            Command::Bound(_) => "bound",
            Command::Oracle(_) => "oracle",
            Command::Martingale(_) => "martingale",
        }
    }

    fn out(&self) -> Option<&Path> {
        match self {
            Command::Check(a) => a.common.out.as_deref(),
            Command::Bound(a) => a.common.out.as_deref(),
            Command::Oracle(a) => a.out.as_deref(),
            Command::Martingale(a) => a.out.as_deref(),
        }
    }
}

#[derive(Debug, Args)]
pub struct SolverArgs {
    /// Relaxation degree, overrides the market file.
    #[arg(long)]
    pub degree: Option<usize>,
    /// Solver tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    pub market: PathBuf,
    #[command(flatten)]
    pub common: SolverArgs,
    /// Write the assembled conic problem in text form.
    #[arg(long)]
    pub dump: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DirectionArg {
    Upper,
    Lower,
    Both,
}

impl DirectionArg {
    fn directions(self) -> &'static [Direction] {
        match self {
            DirectionArg::Upper => &[Direction::Upper],
            DirectionArg::Lower => &[Direction::Lower],
            DirectionArg::Both => &[Direction::Upper, Direction::Lower],
        }
    }
}

#[derive(Debug, Args)]
pub struct BoundArgs {
    pub market: PathBuf,
    /// Target payoff, e.g. `x1`, `call:x1:0.4` or `spread_straddle:x1:x2:0`.
    #[arg(long)]
    pub target: String,
    #[arg(long, value_enum, default_value = "both")]
    pub direction: DirectionArg,
    #[command(flatten)]
    pub common: SolverArgs,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    pub market: PathBuf,
    /// Grid points per axis.
    #[arg(long, default_value_t = DEFAULT_GRID)]
    pub grid: usize,
    /// Bound this payoff instead of testing feasibility.
    #[arg(long)]
    pub target: Option<String>,
    #[arg(long, value_enum, default_value = "both")]
    pub direction: DirectionArg,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MartingaleArgs {
    /// Measure of the earlier date.
    pub first: PathBuf,
    /// Measure of the later date.
    pub second: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

enum Failure {
    Input(InputError),
    Core(CoreError),
}

impl From<InputError> for Failure {
    fn from(e: InputError) -> Self {
        Failure::Input(e)
    }
}

impl From<CoreError> for Failure {
    fn from(e: CoreError) -> Self {
        Failure::Core(e)
    }
}

fn core_exit(e: &CoreError) -> (i32, &'static str) {
    match e {
        CoreError::AtDegree { source, .. } => core_exit(source),
        CoreError::InfeasibleMarket(r) => match r.verdict {
            Verdict::RelaxationInfeasible => (EXIT_ARBITRAGE, "infeasible_market"),
            _ => (EXIT_INCONCLUSIVE, "marginal_market"),
        },
        CoreError::OracleInfeasible(_) => (EXIT_ARBITRAGE, "oracle_infeasible"),
        CoreError::GridTooLarge { .. } => (EXIT_INPUT, "grid_too_large"),
        CoreError::BasisTooLarge { .. } => (EXIT_INPUT, "basis_too_large"),
        CoreError::InvalidArgument(_) | CoreError::InvalidMarket(_) | CoreError::Overflow(_) => {
            (EXIT_INPUT, "invalid_input")
        }
        CoreError::Solver(_) | CoreError::Internal(_) | CoreError::HierarchyViolation { .. } => {
            (EXIT_INCONCLUSIVE, "solver")
        }
    }
}

fn embedded_report(e: &CoreError) -> Option<Box<momentarb::ArbitrageReport>> {
    match e {
        CoreError::AtDegree { source, .. } => embedded_report(source),
        CoreError::InfeasibleMarket(r) => Some(r.clone()),
        _ => None,
    }
}

impl Failure {
    fn into_report(self) -> (i32, ErrorReport) {
        match self {
            Failure::Input(e) => (
                EXIT_INPUT,
                ErrorReport {
                    kind: e.kind.into(),
                    message: e.message,
                    violations: e.violations,
                    arbitrage_report: None,
                },
            ),
            Failure::Core(e) => {
                let (code, kind) = core_exit(&e);
                let arbitrage_report = embedded_report(&e);
                (
                    code,
                    ErrorReport {
                        kind: kind.into(),
                        message: e.to_string(),
                        violations: Vec::new(),
                        arbitrage_report,
                    },
                )
            }
        }
    }
}

fn read(path: &Path, report: &mut ReportFile) -> Result<Vec<u8>, InputError> {
    let bytes = std::fs::read(path)
        .map_err(|e| InputError::new("io", format!("cannot read {}: {e}", path.display())))?;
    report
        .inputs
        .push(InputDigest::of(&path.display().to_string(), &bytes));
    Ok(bytes)
}

fn load_market(
    path: &Path,
    degree: Option<usize>,
    report: &mut ReportFile,
) -> Result<MarketInstance, InputError> {
    let bytes = read(path, report)?;
    let market = MarketFile::parse(&bytes)?.to_market(degree)?;
    report.conversions = market
        .derivatives
        .iter()
        .filter_map(|d| {
            d.converted_from_call.as_ref().map(|c| ConversionRecord {
                derivative: d.payoff.name.clone(),
                conversion: c.clone(),
            })
        })
        .collect();
    Ok(market)
}

fn solver_settings(tol: Option<f64>) -> Result<SolverSettings, InputError> {
    let tol = tol.unwrap_or(DEFAULT_TOL);
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(InputError::new(
            "usage",
            format!("--tol must be a positive number, got {tol}"),
        ));
    }
    let max_iter = match std::env::var(MAX_ITER_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => n,
            _ => {
                return Err(InputError::new(
                    "usage",
                    format!("{MAX_ITER_ENV} must be a positive integer, got {v:?}"),
                ))
            }
        },
        Err(_) => DEFAULT_MAX_ITER,
    };
    Ok(SolverSettings { tol, max_iter })
}

fn run_check(a: &CheckArgs, report: &mut ReportFile) -> Result<i32, Failure> {
    let settings = solver_settings(a.common.tol)?;
    let market = load_market(&a.market, a.common.degree, report)?;
    report.settings = Some(RunSettings {
        degree: Some(market.degree),
        tol: settings.tol,
        max_iter: Some(settings.max_iter),
        grid: None,
    });
    if let Some(path) = &a.dump {
        let text = assemble(&market, market.degree)?.to_conic()?.to_dump();
        std::fs::write(path, text)
            .map_err(|e| InputError::new("io", format!("cannot write {}: {e}", path.display())))?;
    }
    let r = check_no_arbitrage_with(&market, &settings)?;
    let code = if r.arbitrage_detected() {
        EXIT_ARBITRAGE
    } else if r.verdict == Verdict::Marginal {
        EXIT_INCONCLUSIVE
    } else {
        EXIT_OK
    };
    report.result = Some(CommandResult::Check(r));
    Ok(code)
}

fn run_bound(a: &BoundArgs, report: &mut ReportFile) -> Result<i32, Failure> {
    let settings = solver_settings(a.common.tol)?;
    let market = load_market(&a.market, a.common.degree, report)?;
    report.settings = Some(RunSettings {
        degree: Some(market.degree),
        tol: settings.tol,
        max_iter: Some(settings.max_iter),
        grid: None,
    });
    let target = parse_target(&a.target, &market)?;
    let bounds = a
        .direction
        .directions()
        .iter()
        .map(|d| price_bounds_with(&market, &target, *d, &settings))
        .collect::<Result<Vec<_>, _>>()?;
    report.result = Some(CommandResult::Bound { bounds });
    Ok(EXIT_OK)
}

fn run_oracle(a: &OracleArgs, report: &mut ReportFile) -> Result<i32, Failure> {
    let market = load_market(&a.market, None, report)?;
    report.settings = Some(RunSettings {
        degree: None,
        tol: momentarb::oracle::ORACLE_FEAS_TOL,
        max_iter: None,
        grid: Some(a.grid),
    });
    match &a.target {
        None => {
            let r = oracle_feasible(&market, a.grid)?;
            let code = if r.feasible { EXIT_OK } else { EXIT_ARBITRAGE };
            report.result = Some(CommandResult::OracleFeasibility(r));
            Ok(code)
        }
        Some(spec) => {
            let target = parse_target(spec, &market)?;
            let bounds = a
                .direction
                .directions()
                .iter()
                .map(|d| oracle_bound(&market, &target, *d, a.grid))
                .collect::<Result<Vec<_>, _>>()?;
            report.result = Some(CommandResult::OracleBound { bounds });
            Ok(EXIT_OK)
        }
    }
}

fn run_martingale(a: &MartingaleArgs, report: &mut ReportFile) -> Result<i32, Failure> {
    let mu = MeasureFile::parse(&read(&a.first, report)?)?.to_measure()?;
    let nu = MeasureFile::parse(&read(&a.second, report)?)?.to_measure()?;
    let transition = find_transition(&mu, &nu)?;
    let convex_order = if mu.dim() == 1 {
        Some(convex_order_check(&mu, &nu)?)
    } else {
        None
    };
    let code = if transition.feasible {
        EXIT_OK
    } else {
        EXIT_ARBITRAGE
    };
    report.result = Some(CommandResult::Martingale {
        transition,
        convex_order,
    });
    Ok(code)
}

/// Run one parsed command. The report always carries the exit code.
pub fn execute(command: &Command) -> ReportFile {
    let mut report = ReportFile::new(command.name());
    let outcome = match command {
        Command::Check(a) => run_check(a, &mut report),
        Command::Bound(a) => run_bound(a, &mut report),
        Command::Oracle(a) => run_oracle(a, &mut report),
        Command::Martingale(a) => run_martingale(a, &mut report),
    };
    match outcome {
        Ok(code) => report.exit_code = code,
        Err(f) => {
            let (code, err) = f.into_report();
            report.exit_code = code;
            report.error = Some(err);
        }
    }
    report
}

fn direction_word(d: Direction) -> &'static str {
    match d {
        Direction::Upper => "upper",
        Direction::Lower => "lower",
    }
}

/// One or two lines for a human reader.
pub fn summary(report: &ReportFile) -> String {
    if let Some(e) = &report.error {
        let mut s = format!("error ({}): {}", e.kind, e.message);
        for v in &e.violations {
            if v.message != e.message {
                s.push_str(&format!(
                    "\n  {}: {}",
                    if v.path.is_empty() { "/" } else { &v.path },
                    v.message
                ));
            }
        }
        return s;
    }
    match &report.result {
        Some(CommandResult::Check(r)) => {
            let mut s = format!("{}: {}", report.command, r.note);
            for v in &r.static_violations {
                s.push_str(&format!("\n  {v}"));
            }
            s
        }
        Some(CommandResult::Bound { bounds }) => bounds
            .iter()
            .map(|b| {
                let extra = if b.pinned { " (pinned by a quote)" } else { "" };
                format!(
                    "{} bound on {} at degree {}: {}{extra}",
                    direction_word(b.direction),
                    b.target,
                    b.degree,
                    round_significant(b.value)
                )
            })
            .collect::<Vec<_>>()
            .join("\n"),
        Some(CommandResult::OracleFeasibility(r)) => format!(
            "grid of {} points: {} (slack {})",
            r.grid_points,
            if r.feasible {
                "a pricing measure exists"
            } else {
                "no pricing measure on the grid"
            },
            round_significant(r.slack)
        ),
        Some(CommandResult::OracleBound { bounds }) => bounds
            .iter()
            .map(|b| {
                format!(
                    "{} grid bound on {} over {} points: {}",
                    direction_word(b.direction),
                    b.target,
                    b.grid_points,
                    round_significant(b.value)
                )
            })
            .collect::<Vec<_>>()
            .join("\n"),
        Some(CommandResult::Martingale { transition, .. }) => format!(
            "martingale transition {} (slack {})",
            if transition.feasible {
                "found"
            } else {
                "does not exist"
            },
            round_significant(transition.slack)
        ),
        None => String::new(),
    }
}

/// Write the JSON report. Falls back to exit 64 when `--out` is unwritable.
pub fn emit(command: &Command, report: &mut ReportFile) {
    if let Some(path) = command.out() {
        if let Err(e) = std::fs::write(path, report.to_json()) {
            report.exit_code = EXIT_INPUT;
            report.result = None;
            report.error = Some(ErrorReport {
                kind: "io".into(),
                message: format!("cannot write {}: {e}", path.display()),
                violations: Vec::new(),
                arbitrage_report: None,
            });
            print!("{}", report.to_json());
        }
    } else {
        print!("{}", report.to_json());
    }
}
