mod cli;
mod commands;
mod config;

use clap::Parser;
use hubnet::error::Result;

fn run(parsed: cli::Cli) -> Result<()> {
    let layers = config::Layers::from_file(parsed.config.as_deref())?;
    match &parsed.command {
        cli::Command::Simulate(args) => commands::run_simulate(args, &layers),
        cli::Command::Ingest(args) => commands::run_ingest(args, &layers),
        cli::Command::Rank(args) => commands::run_rank(args, &layers),
        cli::Command::Estimate(args) => commands::run_estimate(args, &layers),
        cli::Command::Rolling(args) => commands::run_rolling(args, &layers),
        cli::Command::Cluster(args) => commands::run_cluster(args, &layers),
        cli::Command::ExportNetwork(args) => commands::run_export_network(args, &layers),
    }
}

fn main() {
    // Unknown flags and malformed invocations exit 2 with usage via clap;
    // contract violations exit 1 with one machine-readable line.
    let parsed = cli::Cli::parse();
    match run(parsed) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error code={} message={:?}", e.code(), e.to_string());
            std::process::exit(1);
        }
    }
}
