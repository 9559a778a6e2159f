use std::process::ExitCode;

use clap::Parser;
use greedy_core::cli::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(gates) if gates.is_empty() => ExitCode::SUCCESS,
        Ok(gates) => {
            for g in &gates {
                eprintln!("gate failed: {}: {}", g.metric, g.detail);
            }
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
