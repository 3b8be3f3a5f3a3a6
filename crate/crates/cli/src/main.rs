use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use contactflow::app::{self, ExitStatus, Outcome};
use contactflow::{Overrides, SolverConfig};
use contactflow_core::diagnostics::Verdict;

#[derive(Parser)]
#[command(
    name = "contactflow",
    version,
    about = "Particle and grid solvers with invariant checks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured solver(s) and check the output.
    Run(RunArgs),
    /// Run both solvers and compare them, optionally over several resolutions.
    Compare(RunArgs),
    /// Recompute the report of an existing output directory.
    Diagnose {
        #[arg(long)]
        out: PathBuf,
    },
    /// List the initial-data families.
    ListProfiles,
}

#[derive(Args)]
struct RunArgs {
    /// Configuration file; defaults apply to keys it does not set.
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    overrides: Overrides,
}

fn load(args: &RunArgs) -> Result<SolverConfig, contactflow::ConfigError> {
    match &args.config {
        Some(path) => SolverConfig::load(path, &args.overrides),
        None => SolverConfig::parse("", "defaults", &args.overrides),
    }
}

fn print_outcome(out: &Path, outcome: &Outcome) {
    for (solver, s) in &outcome.summaries {
        let estimate = s
            .blowup_estimate
            .map_or_else(String::new, |t| format!(", blowup estimate {t:.6}"));
        println!(
            "{}: {} at t = {:.6} after {} steps{estimate}",
            solver.name(),
            s.termination,
            s.final_time,
            s.steps
        );
    }
    for r in &outcome.convergence {
        println!(
            "n = {}: transport {:.3e}, field {:.3e}",
            r.n, r.transport, r.field
        );
    }
    let report = &outcome.report;
    let failed: Vec<_> = report
        .checks
        .iter()
        .zip(&outcome.scopes)
        .filter(|(c, _)| c.verdict == Verdict::Fail)
        .collect();
    for (c, scope) in failed.iter().take(10) {
        eprintln!(
            "FAIL {scope} {} at t = {}: residual {:e} > tolerance {:e}",
            c.name, c.time, c.residual, c.tolerance
        );
    }
    println!(
        "{} checks, {} failed; report in {}",
        report.checks.len(),
        failed.len(),
        out.join(app::REPORT_TEXT).display()
    );
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(ExitStatus::InvalidInput.code())
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let (out, result) = match &cli.command {
        Command::ListProfiles => {
            print!("{}", app::list_profiles());
            return ExitCode::SUCCESS;
        }
        Command::Diagnose { out } => (out.clone(), app::diagnose(out)),
        Command::Run(args) | Command::Compare(args) => {
            let cfg = match load(args) {
                Ok(cfg) => cfg,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(ExitStatus::InvalidInput.code());
                }
            };
            let result = if matches!(cli.command, Command::Run(_)) {
                app::run(&cfg, &args.out)
            } else {
                app::compare(&cfg, &args.out)
            };
            (args.out.clone(), result)
        }
    };
    match result {
        Ok(outcome) => {
            print_outcome(&out, &outcome);
            ExitCode::from(outcome.status.code())
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(ExitStatus::InvalidInput.code())
        }
    }
}
