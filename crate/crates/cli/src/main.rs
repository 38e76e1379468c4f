use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use dcot_cli::{run, CliError, Command, Format, Overrides, RunConfig};

/// Double-core tensor factorization and completion.
#[derive(Debug, Parser)]
#[command(name = "dcot", version)]
struct Args {
    #[arg(value_enum)]
    command: Command,
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides the config).
    #[arg(long)]
    output: Option<PathBuf>,
    /// Worker threads for grid search.
    #[arg(long)]
    threads: Option<usize>,
    /// Seed for every random choice (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Format for tensors with missing entries.
    #[arg(long, value_enum)]
    format: Option<Format>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("DCOT_LOG", "warn")).init();
    let args = Args::parse();
    let overrides = Overrides { output: args.output, threads: args.threads, seed: args.seed, format: args.format };
    let result = RunConfig::load(&args.config).and_then(|cfg| run(args.command, cfg, &overrides));
    match result {
        Ok(summary) => {
            println!("{}", serde_json::to_string_pretty(&summary).expect("JSON values always serialize"));
            ExitCode::SUCCESS
        }
        Err(e) => report(&e),
    }
}

fn report(e: &CliError) -> ExitCode {
    eprintln!("{}", e.to_json());
    ExitCode::from(e.exit_code() as u8)
}
