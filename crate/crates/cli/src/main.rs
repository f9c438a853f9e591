use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;

/// Exit status for invalid arguments or configuration.
pub const EXIT_USAGE: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "ceph", version, about = "Cephalometric landmark decoding and analysis")]
pub struct Cli {
    /// Model descriptor (model.json).
    #[arg(long, global = true, env = "CEPH_MODEL_JSON")]
    pub model: Option<PathBuf>,
    /// Landmark catalog JSON; the built-in 19-point catalog if omitted.
    #[arg(long, global = true)]
    pub landmarks: Option<PathBuf>,
    /// Measurement definitions JSON; the built-in battery if omitted.
    #[arg(long, global = true)]
    pub measurements: Option<PathBuf>,
    /// Only print errors.
    #[arg(long, short, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Decode radiographs and write reports.
    Decode(commands::decode::DecodeArgs),
    /// Time the pipeline on one image.
    Bench(commands::bench::BenchArgs),
    /// Score predicted landmarks against ground truth.
    Eval(commands::eval::EvalArgs),
    /// Run the HTTP case service.
    Serve(commands::serve::ServeArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { "error" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    let code = match &cli.command {
        Command::Decode(args) => commands::decode::run(&cli, args),
        Command::Bench(args) => commands::bench::run(&cli, args),
        Command::Eval(args) => commands::eval::run(&cli, args),
        Command::Serve(args) => commands::serve::run(&cli, args),
    };
    ExitCode::from(code)
}
