use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use surrogate::commands::{self, AdaptArgs, EvalArgs, GenArgs, PretrainArgs, ReportArgs, SelectArgs};
use surrogate::StoreError;

/// Masked transformer surrogates: synthetic data, pretraining, few-shot
/// adaptation, graph-smoothed hyper-parameter selection and evaluation.
///
/// Exit status: 0 on success, 1 when a computation fails, 2 for usage
/// errors and missing or unusable paths.
#[derive(Parser)]
#[command(name = "surrogate", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic source/target benchmark.
    Gen(GenArgs),
    /// Pretrain a surrogate on a source dataset.
    Pretrain(PretrainArgs),
    /// Fine-tune a checkpoint on target samples with one configuration.
    Adapt(AdaptArgs),
    /// Sweep the hyper-parameter grid and select a configuration.
    Select(SelectArgs),
    /// Run the leave-k-out protocol.
    Eval(EvalArgs),
    /// Build tables and charts from an evaluation directory.
    Report(ReportArgs),
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<StoreError>() {
        Some(e) if e.is_usage() => 2,
        Some(StoreError::Core(surrogate_core::Error::InvalidArgument(_))) => 2,
        _ => 1,
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let (name, written) = match &cli.command {
        Command::Gen(a) => ("gen", commands::gen(a)),
        Command::Pretrain(a) => ("pretrain", commands::pretrain(a)),
        Command::Adapt(a) => ("adapt", commands::adapt(a)),
        Command::Select(a) => ("select", commands::select(a)),
        Command::Eval(a) => ("eval", commands::eval(a)),
        Command::Report(a) => ("report", commands::report(a)),
    };
    let dir = written.with_context(|| format!("{name} failed"))?;
    println!("{name}: wrote {}", dir.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
