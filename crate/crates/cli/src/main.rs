//! Batch front end for the rod mechanics library.
//!
//! `rodsim run <scenario.json>` parses a JSON scenario, dispatches the
//! requested solver or diagnostic, and writes `results.csv`, `report.json`
//! and (for dynamic runs) `trajectory.csv` into the output directory.
//!
//! Exit codes: 0 on success, 1 on environment problems, 2 on scenario schema
//! violations (the message names the offending field), 3 on solver
//! non-convergence. The `RODSIM_LOG` environment variable controls log
//! verbosity.

mod failure;
mod output;
mod runs;
mod scenario;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::failure::Failure;
use crate::runs::RunContext;
use crate::scenario::{Mode, Scenario};

#[derive(Parser)]
#[command(name = "rodsim", version, about = "Batch rod mechanics runs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario file and write result artifacts.
    Run(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file (JSON).
    scenario: PathBuf,
    /// Output directory; overrides the scenario's `output.directory`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Bit-reproducible artifacts: forces single-threaded studies.
    #[arg(long)]
    deterministic: bool,
    /// Convergence study over K mesh levels, doubling the element count
    /// each level (static modes only).
    #[arg(long, value_name = "K")]
    convergence: Option<usize>,
    /// Worker threads for convergence studies (default 1).
    #[arg(long, value_name = "N")]
    jobs: Option<usize>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter("RODSIM_LOG")).init();
    let cli = Cli::parse();
    let Command::Run(args) = cli.command;
    match run(&args) {
        Ok(out_dir) => {
            println!("wrote artifacts to {}", out_dir.display());
            ExitCode::SUCCESS
        }
        Err(failure) => {
            eprintln!("error: {}", failure.message());
            ExitCode::from(failure.exit_code() as u8)
        }
    }
}

fn run(args: &RunArgs) -> Result<PathBuf, Failure> {
    let text = std::fs::read_to_string(&args.scenario).map_err(|e| {
        Failure::Io(format!(
            "cannot read scenario {}: {e}",
            args.scenario.display()
        ))
    })?;
    let plan = Scenario::from_json(&text)?.validate()?;

    if args.convergence.is_some() && !matches!(plan.mode, Mode::StaticTi | Mode::StaticGeneral) {
        return Err(Failure::Schema(format!(
            "--convergence: only applies to static modes (scenario mode is `{}`)",
            plan.mode.name()
        )));
    }

    let out_dir = args
        .out
        .clone()
        .or_else(|| plan.output_directory.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    let jobs = if args.deterministic {
        1
    } else {
        args.jobs.unwrap_or(1).max(1)
    };

    let scenario_name = args
        .scenario
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| args.scenario.display().to_string());
    let ctx = RunContext {
        plan,
        scenario_name,
        out_dir: out_dir.clone(),
        deterministic: args.deterministic,
        convergence: args.convergence,
        jobs,
    };
    log::info!(
        "running {} (mode {}) into {}",
        ctx.scenario_name,
        ctx.plan.mode.name(),
        out_dir.display()
    );
    runs::execute(&ctx)?;
    Ok(out_dir)
}
