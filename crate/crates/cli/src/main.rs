//! `ingnn` command-line front end.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ingnn::ErrorKind;

#[derive(Parser)]
#[command(name = "ingnn", version, about = "Interaction-network GNN inference, hardware models and co-design search")]
struct Cli {
    /// Directory for output files.
    #[arg(long, global = true, env = "INGNN_OUT_DIR", default_value = ".")]
    out_dir: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the forward pass over a batch of graphs.
    Infer(commands::InferArgs),
    /// Analytical DSP, II and latency estimate for one configuration.
    Estimate(commands::EstimateArgs),
    /// Cycle-level simulation of the pipeline architectures.
    Simulate(commands::SimulateArgs),
    /// Design space exploration under latency and DSP constraints.
    Dse(commands::DseArgs),
    /// Operation counts of the structured kernels against dense products.
    ReduceReport(commands::ReduceArgs),
    /// Fixed-point agreement across datapath formats.
    QuantizeSweep(commands::SweepArgs),
    /// Check kernels and arithmetic against dense references.
    Selftest(commands::SelftestArgs),
}

/// Options shared by commands that accept a model.
#[derive(Args, Clone)]
pub struct ModelInput {
    /// Model description JSON.
    #[arg(long, requires = "weights")]
    pub model: Option<PathBuf>,
    /// Weights JSON matching the model description.
    #[arg(long, requires = "model")]
    pub weights: Option<PathBuf>,
    /// Seed for the synthetic model and inputs used when no files are given.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!("{}", output::error_json("parse", e.render().to_string().trim_end()));
            return ExitCode::from(2);
        }
    };
    let result = output::OutDir::new(cli.out_dir).and_then(|mut out| {
        match cli.command {
            Command::Infer(a) => commands::infer(a, &mut out),
            Command::Estimate(a) => commands::estimate(a, &mut out),
            Command::Simulate(a) => commands::simulate(a, &mut out),
            Command::Dse(a) => commands::dse(a, &mut out),
            Command::ReduceReport(a) => commands::reduce_report(a, &mut out),
            Command::QuantizeSweep(a) => commands::quantize_sweep(a, &mut out),
            Command::Selftest(a) => commands::selftest(a, &mut out),
        }
    });
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            let (kind, code) = match e.kind() {
                ErrorKind::Parse => ("parse", 2),
                ErrorKind::Infeasible => ("infeasible", 3),
                ErrorKind::Numeric => ("numeric", 4),
            };
            eprintln!("{}", output::error_json(kind, e.to_string()));
            ExitCode::from(code)
        }
    }
}
