//! `viability` command-line driver.
//!
//! Exit status: 0 when every check passed, 1 when a mathematical check
//! failed, 2 on usage or I/O errors.

mod commands;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use report::{table_csv, write_atomic, Report};

#[derive(Debug, Parser, Serialize)]
#[command(name = "viability", version, about = "No-arbitrage, viability and numéraire checks for finite markets")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GlobalOpts {
    /// Tolerance for equalities (residuals).
    #[arg(long, global = true, default_value_t = 1e-9)]
    pub tol_eq: f64,
    /// Tolerance for inequalities (supermartingale and bound checks).
    #[arg(long, global = true, default_value_t = 1e-7)]
    pub tol_ineq: f64,
    #[arg(long, global = true, default_value_t = 42)]
    pub seed: u64,
    /// Report file, written atomically. Prints to stdout when absent.
    #[arg(long, global = true, visible_alias = "report")]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
    Text,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "subcommand", rename_all = "kebab-case")]
pub enum Command {
    /// Decide no-arbitrage and NUPBR with a verified certificate.
    Check(commands::MarketArg),
    /// Build the numéraire portfolio and test the supermartingale property.
    Numeraire(commands::NumeraireArgs),
    /// Maximize expected utility under the physical or another measure.
    Optimize(commands::OptimizeArgs),
    /// Equivalent measure within L1 distance epsilon of P and its value bound.
    Measure(commands::MeasureArgs),
    /// Minimal-entropy EMM, exponential utility, or an entropy-Hellinger report.
    Entropy(commands::EntropyArgs),
    /// Monte Carlo of the three-dimensional Bessel model.
    Simulate(commands::SimulateArgs),
    /// Four-way agreement on seeded random markets.
    EquivalenceSuite(commands::SuiteArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Check(_) => "check",
            Command::Numeraire(_) => "numeraire",
            Command::Optimize(_) => "optimize",
            Command::Measure(_) => "measure",
            Command::Entropy(_) => "entropy",
            Command::Simulate(_) => "simulate",
            Command::EquivalenceSuite(_) => "equivalence-suite",
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let g = &cli.global;
    let mut report = Report::new(cli.command.name(), serde_json::to_value(&cli).expect("config serializes"));
    let start = Instant::now();
    let outcome = if !(g.tol_eq > 0.0 && g.tol_ineq > 0.0) {
        Err(commands::CliError::Usage("tolerances must be positive".into()))
    } else {
        commands::run(&cli.command, g, &mut report)
    };
    report.timing_seconds = start.elapsed().as_secs_f64();
    let code = match outcome {
        Ok(()) if report.passed => 0,
        Ok(()) => 1,
        Err(e) => {
            report.passed = false;
            report.error = Some(e.to_string());
            eprintln!("error: {e}");
            2
        }
    };
    let text = match g.format {
        Format::Json => report.to_json(),
        Format::Text => report.to_text(),
        Format::Csv => report.to_csv(),
    };
    let written = match &g.out {
        None => {
            print!("{text}");
            Ok(())
        }
        Some(path) => write_atomic(path, &text).and_then(|()| {
            // side tables next to the report, one CSV each
            for t in &report.tables {
                let side = path.with_extension(format!("{}.csv", t.name));
                write_atomic(&side, &table_csv(t))?;
            }
            Ok(())
        }),
    };
    if let Err(e) = written {
        eprintln!("error: cannot write report: {e}");
        return ExitCode::from(2);
    }
    ExitCode::from(code)
}
