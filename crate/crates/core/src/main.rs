use std::panic;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use corpusbias_core::pipeline::{self, Overrides, Pipeline, EXIT_INTERNAL};

#[derive(Parser)]
#[command(name = "corpusbias", version, about = "Audit corpora, apply interventions, and score bias benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Checkpoint file of an interrupted run to continue from.
    #[arg(long)]
    resume: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Corpus statistics, sentiment, toxicity and coherence.
    Audit(RunArgs),
    /// Build a modified corpus (CDA, CDS, removal, detox, perturbation).
    Intervene(RunArgs),
    /// Score benchmarks with one scorer.
    Bench(RunArgs),
    /// Fit INLP or Sent-Debias projections.
    Debias(RunArgs),
    /// Shift tables, correlations and plot data.
    Analyze(RunArgs),
    /// Score a sequence of checkpoints.
    Sweep(RunArgs),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (pipeline, args) = match cli.command {
        Command::Audit(a) => (Pipeline::Audit, a),
        Command::Intervene(a) => (Pipeline::Intervene, a),
        Command::Bench(a) => (Pipeline::Bench, a),
        Command::Debias(a) => (Pipeline::Debias, a),
        Command::Analyze(a) => (Pipeline::Analyze, a),
        Command::Sweep(a) => (Pipeline::Sweep, a),
    };
    let overrides = Overrides {
        seed: args.seed,
        resume: args.resume,
    };
    let result = panic::catch_unwind(|| pipeline::run(pipeline, &args.config, &overrides));
    let code = match result {
        Ok(Ok(outcome)) => {
            for p in &outcome.outputs {
                println!("{}", p.display());
            }
            if let Some(m) = &outcome.message {
                eprintln!("{pipeline}: {m}");
            }
            outcome.exit_code
        }
        Ok(Err(e)) => {
            eprintln!("{pipeline}: {e}");
            if let corpusbias_core::Error::External {
                checkpoint: Some(ck), ..
            } = &e
            {
                eprintln!("progress saved; rerun with --resume {}", ck.display());
            }
            pipeline::exit_code(&e)
        }
        Err(_) => {
            eprintln!("{pipeline}: internal error");
            EXIT_INTERNAL
        }
    };
    ExitCode::from(code as u8)
}
