//! `speckledic` command-line front end.
//!
//! Every subcommand prints one JSON object on stdout (see
//! `schema/summary.v1.json`). Usage errors exit with 2, module errors with 1
//! and a JSON error object on stderr.

mod args;
mod commands;
mod summary;

use std::process::ExitCode;

use clap::Parser;

use args::Cli;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            return summary::fail(&anyhow::Error::new(e));
        }
    }
    match commands::run(&cli) {
        Ok(value) => {
            println!("{}", serde_json::to_string_pretty(&value).expect("summary serializes"));
            ExitCode::SUCCESS
        }
        Err(e) => summary::fail(&e),
    }
}
