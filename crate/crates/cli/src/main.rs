use std::process::ExitCode;

use clap::Parser;

use pmri_cli::args::{Cli, Command};
use pmri_cli::{commands, CliError};

fn run(cli: Cli) -> Result<(), CliError> {
    let det = cli.deterministic;
    match cli.command {
        Command::Generate(a) => commands::generate(&a, det).map(|_| ()),
        Command::Reconstruct(a) => commands::reconstruct(&a, det).map(|_| ()),
        Command::Train(a) => commands::train(&a).map(|_| ()),
        Command::Evaluate(a) => commands::evaluate(&a, det).map(|_| ()),
        Command::Compare(a) => commands::compare(&a).map(|_| ()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
