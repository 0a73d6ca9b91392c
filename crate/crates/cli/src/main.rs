//! `expertscope` command-line entry point.

mod commands;
mod inputs;
mod manifest;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "expertscope", version, about = "Interpretability pipelines for toy Mixture-of-Experts models")]
struct Cli {
    /// Worker threads for parallel stages (defaults to EXPERTSCOPE_WORKERS or all cores).
    #[arg(long, global = true, env = "EXPERTSCOPE_WORKERS")]
    workers: Option<usize>,

    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Create, plant or inspect model weights.
    #[command(subcommand)]
    Model(commands::model::ModelCommand),
    /// Train or apply the byte-level BPE tokenizer.
    #[command(subcommand)]
    Tokenizer(commands::tokenizer::TokenizerCommand),
    /// Sparse probing sweep over concepts, sites and k.
    Probe(commands::probe::ProbeArgs),
    /// Logit attribution: trigger-target cases or a per-component breakdown.
    #[command(subcommand)]
    Attribute(commands::attribute::AttributeCommand),
    /// Routing and functional specialization scores.
    Specialize(commands::specialize::SpecializeArgs),
    /// Mine examples and label experts with an explainer and a scorer model.
    Autointerp(commands::autointerp::AutointerpArgs),
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let filter = tracing_subscriber::EnvFilter::try_from_env("EXPERTSCOPE_LOG")
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(level));
    let _ = tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .try_init();
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.verbose);
    if let Some(n) = cli.workers {
        if n == 0 {
            eprintln!("error: --workers must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot size the worker pool: {e}");
            return ExitCode::from(1);
        }
    }
    let result = match cli.command {
        Command::Model(c) => commands::model::run(c),
        Command::Tokenizer(c) => commands::tokenizer::run(c),
        Command::Probe(a) => commands::probe::run(a),
        Command::Attribute(c) => commands::attribute::run(c),
        Command::Specialize(a) => commands::specialize::run(a),
        Command::Autointerp(a) => commands::autointerp::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_usage() { 2 } else { 1 })
        }
    }
}
