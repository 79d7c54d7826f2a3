//! Scenario files, CSV/report output and the `lambdaset` command line.

pub mod commands;
pub mod config;
pub mod fixtures;
pub mod output;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use lambdaset_core::scenarios::Builtin;

pub use commands::{execute, CheckKind, Command, Outcome, SearchKind, Status};
pub use config::{load_scenario, load_str, ScenarioConfig};
pub use output::{parse_trajectory_csv, trajectory_csv, RunReport};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Runtime(_) | Self::Io { .. } => 3,
        }
    }
}

impl From<lambdaset_core::Error> for CliError {
    fn from(e: lambdaset_core::Error) -> Self {
        match e {
            lambdaset_core::Error::Config(_) | lambdaset_core::Error::Capability(_) => Self::Config(e.to_string()),
            e => Self::Runtime(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "lambdaset", version, about = "Numerical multiplier-set checks for optimal control examples")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, clap::Args)]
struct Common {
    /// Scenario file in the sectioned key = value format.
    #[arg(long, global = true, value_name = "FILE")]
    scenario: Option<PathBuf>,
    /// Builtin example; overrides the file's scenario name.
    #[arg(long, global = true, value_name = "NAME")]
    builtin: Option<String>,
    /// Override a parameter, candidate or run key.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Output directory (default: $LAMBDA_OUT_DIR or ./lambdaset-out).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Refuse inadmissible references and treat unclean studies as negative.
    #[arg(long, global = true)]
    strict: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CheckArg {
    First,
    Second,
    Filippov,
    Hybrid,
    Stochastic,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SearchArg {
    First,
    Second,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Integrate the scenario and write its trajectory.
    Simulate,
    /// Evaluate the residuals of one candidate multiplier.
    Check {
        #[arg(value_enum)]
        kind: CheckArg,
    },
    /// Grid search over unit initial costates.
    Search {
        #[arg(value_enum)]
        kind: SearchArg,
    },
    /// Oscillating-control convergence study.
    Converge,
    /// Monte Carlo cost of the feedback law.
    Montecarlo,
    /// Paired cost differences along a control direction.
    VariationTest,
}

impl Cmd {
    fn resolve(&self) -> Command {
        match self {
            Self::Simulate => Command::Simulate,
            Self::Check { kind } => Command::Check(match kind {
                CheckArg::First => CheckKind::First,
                CheckArg::Second => CheckKind::Second,
                CheckArg::Filippov => CheckKind::Filippov,
                CheckArg::Hybrid => CheckKind::Hybrid,
                CheckArg::Stochastic => CheckKind::Stochastic,
            }),
            Self::Search { kind } => Command::Search(match kind {
                SearchArg::First => SearchKind::First,
                SearchArg::Second => SearchKind::Second,
            }),
            Self::Converge => Command::Converge,
            Self::Montecarlo => Command::MonteCarlo,
            Self::VariationTest => Command::VariationTest,
        }
    }
}

fn resolve_config(c: &Common) -> Result<ScenarioConfig, CliError> {
    let builtin = c.builtin.as_deref().map(str::parse::<Builtin>).transpose()?;
    let mut entries = match &c.scenario {
        Some(p) => config::parse_entries(&config::read_text(p)?)?,
        None => Vec::new(),
    };
    // Overrides are routed by the builtin's parameter keys, so resolve it first.
    let probe = ScenarioConfig::from_entries(&entries, builtin)?;
    let mut overrides = Vec::new();
    for s in &c.sets {
        overrides.push(config::override_entry(s, &probe.params)?);
    }
    if let Some(seed) = c.seed {
        overrides.push(config::override_entry(&format!("run.seed={seed}"), &probe.params)?);
    }
    if let Some(tol) = c.tol {
        overrides.push(config::override_entry(&format!("run.tol={tol}"), &probe.params)?);
    }
    config::apply_overrides(&mut entries, overrides);
    ScenarioConfig::from_entries(&entries, builtin)
}

/// Runs the command line and returns the process exit code:
/// 0 success or ACCEPT, 1 REJECT or nothing found, 2 configuration error,
/// 3 runtime error.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let run = || -> Result<Outcome, CliError> {
        let cfg = resolve_config(&cli.common)?;
        let out = cli.common.out.clone().unwrap_or_else(output::default_out_dir);
        execute(cli.command.resolve(), &cfg, &out, cli.common.strict)
    };
    match run() {
        Ok(o) => {
            print!("{}", o.report.to_text());
            match o.status {
                Status::Success => 0,
                Status::Negative => 1,
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
