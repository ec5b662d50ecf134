//! `entropic-pricer`: batch front end for scenario files.
//!
//! Exit codes: 0 success, 2 invalid input (unreadable or malformed
//! scenario, bad flags), 3 numerical failure, 1 output I/O error.

mod commands;
mod report;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use sha2::{Digest, Sha256};
use thiserror::Error;

use entropic_core::scenario::load_scenario;

use commands::{Context, Output};
use report::{Report, Tolerances};

#[derive(Debug, Parser)]
#[command(name = "entropic-pricer", version, about = "Exponential-utility indifference pricing on finite trees")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Debug, Clone, Subcommand)]
enum Command {
    /// Writer and buyer prices with no-arbitrage bounds.
    Price { scenario: PathBuf },
    /// Agreement intervals between the two agents.
    Agree { scenario: PathBuf },
    /// Partial-equilibrium quantities and prices.
    Equilibrium { scenario: PathBuf },
    /// Second-order price expansion and its error table.
    Expand { scenario: PathBuf },
    /// Hedge and residual risk of each side.
    Hedge { scenario: PathBuf },
    /// Gaussian basis-risk prices and the risk-aversion profile.
    Basisrisk { scenario: PathBuf },
}

impl Command {
    fn parts(&self) -> (&'static str, &PathBuf) {
        match self {
            Command::Price { scenario } => ("price", scenario),
            Command::Agree { scenario } => ("agree", scenario),
            Command::Equilibrium { scenario } => ("equilibrium", scenario),
            Command::Expand { scenario } => ("expand", scenario),
            Command::Hedge { scenario } => ("hedge", scenario),
            Command::Basisrisk { scenario } => ("basisrisk", scenario),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Debug, clap::Args)]
struct Flags {
    /// Nodal Newton tolerance (overrides the scenario).
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Comma-separated risk aversions (overrides the scenario).
    #[arg(long, global = true, value_delimiter = ',')]
    gamma_grid: Option<Vec<f64>>,
    /// Comma-separated expansion step sizes (overrides the scenario).
    #[arg(long, global = true, value_delimiter = ',')]
    eps_grid: Option<Vec<f64>>,
    #[arg(long, global = true, value_enum, default_value = "json")]
    format: Format,
    /// Worker threads for independent claims; results do not depend on it.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Seed for the measures sampled by `hedge`.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Write the report here instead of standard output.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
}

#[derive(Debug, Error)]
enum CliError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: io::Error },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Engine(#[from] entropic_core::Error),
    #[error("cannot write report: {0}")]
    Write(#[from] io::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Read { .. } | CliError::Invalid(_) => 2,
            CliError::Engine(e) if e.is_validation() => 2,
            CliError::Engine(_) => 3,
            CliError::Write(_) => 1,
        }
    }
}

fn positive_grid(name: &str, grid: &[f64]) -> Result<(), CliError> {
    if grid.is_empty() || grid.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(CliError::Invalid(format!("--{name} needs positive finite values")));
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let started = Instant::now();
    let (name, path) = cli.command.parts();
    let bytes = std::fs::read(path).map_err(|source| CliError::Read {
        path: path.clone(),
        source,
    })?;
    let text = String::from_utf8(bytes.clone())
        .map_err(|_| CliError::Invalid(format!("{} is not UTF-8", path.display())))?;
    let mut scenario = load_scenario(&text)?;

    let f = &cli.flags;
    if let Some(tol) = f.tol {
        if !(tol > 0.0 && tol.is_finite()) {
            return Err(CliError::Invalid("--tol must be positive".into()));
        }
        scenario.solver.tol = tol;
    }
    if let Some(g) = &f.gamma_grid {
        positive_grid("gamma-grid", g)?;
        scenario.task.gamma_grid = g.clone();
    }
    if let Some(e) = &f.eps_grid {
        positive_grid("eps-grid", e)?;
        scenario.task.eps_grid = e.clone();
    }
    if f.jobs == 0 {
        return Err(CliError::Invalid("--jobs must be at least 1".into()));
    }

    let ctx = Context {
        scenario: &scenario,
        seed: f.seed,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(f.jobs)
        .build()
        .map_err(|e| CliError::Invalid(e.to_string()))?;
    let Output {
        payload,
        diagnostics,
        table,
    } = pool.install(|| match cli.command {
        Command::Price { .. } => commands::price(&ctx),
        Command::Agree { .. } => commands::agree(&ctx),
        Command::Equilibrium { .. } => commands::equilibrium(&ctx),
        Command::Expand { .. } => commands::expand(&ctx),
        Command::Hedge { .. } => commands::hedge(&ctx),
        Command::Basisrisk { .. } => commands::basisrisk(&ctx),
    })?;

    let report = Report {
        command: name,
        version: env!("CARGO_PKG_VERSION"),
        digest: hex::encode(Sha256::digest(&bytes)),
        tolerances: Tolerances::from_solver(&scenario.solver),
        payload,
        diagnostics,
        table,
    };
    let mut out: Box<dyn Write> = match &f.output {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    };
    match f.format {
        Format::Json => report::write_json(&report, &mut out)?,
        Format::Csv => report::write_csv(&report, &mut out)?,
    }
    out.flush()?;
    // wall time stays out of the report so that reruns are byte-identical
    log::info!("{name} finished in {:.3} s", started.elapsed().as_secs_f64());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("ENTROPIC_PRICER_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
