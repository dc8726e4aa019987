//! skinet: two-stage Bayesian skin lesion diagnosis from the command line.
//!
//! Exit codes: 0 on success, 1 on runtime failure (bad config value,
//! missing checkpoint, dataset problems), 2 on usage errors.

use std::process::ExitCode;

use clap::Parser;

mod cache;
mod commands;
mod config;

#[derive(Debug, Parser)]
#[command(name = "skinet", version, about = "Bayesian skin lesion diagnosis pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Subcommand)]
enum Command {
    /// Train the Bayesian segmentation network.
    TrainSeg(commands::TrainSegArgs),
    /// Train the Bayesian classifier.
    TrainClf(commands::TrainClfArgs),
    /// Diagnose images end to end: segment, classify, triage, explain.
    Infer(commands::InferArgs),
    /// Run the pipeline over a labeled dataset and tabulate triage counts.
    Evaluate(commands::EvaluateArgs),
    /// Render attribution maps for the classifier's predictions.
    Explain(commands::ExplainArgs),
    /// Bokeh-effect benchmark comparing explainers against a random floor.
    XaiBench(commands::XaiBenchArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let run = match &cli.command {
        Command::TrainSeg(a) => commands::train_seg(a),
        Command::TrainClf(a) => commands::train_clf(a),
        Command::Infer(a) => commands::infer(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Explain(a) => commands::explain(a),
        Command::XaiBench(a) => commands::xai_bench(a),
    };
    match run {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
