mod args;
mod commands;
mod config;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use commands::Output;

/// A command-line mistake: reported with exit code 2 like clap's own errors.
#[derive(Debug)]
pub struct Usage(pub String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

const EXIT_DOMAIN: u8 = 1;
const EXIT_USAGE: u8 = 2;

fn run(cli: Cli) -> anyhow::Result<()> {
    let out = Output { json: cli.json };
    match &cli.command {
        Command::Simulate(a) => commands::simulate(a, &out),
        Command::GenData(a) => commands::gen_data(a, &out),
        Command::Train(a) => commands::train(a, &out),
        Command::Maxlik(a) => commands::maxlik(a, &out),
        Command::Evaluate(a) => commands::evaluate(a, &out),
        Command::BenchOpt(a) => commands::bench_opt(a, &out),
        Command::Reproduce(a) => commands::reproduce(a, &out),
    }
}

fn main() -> ExitCode {
    let argv = match config::expand(std::env::args_os().collect()) {
        Ok(argv) => argv,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<Usage>().is_some() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::from(EXIT_DOMAIN)
            }
        }
    }
}
