use std::process::ExitCode;

use clap::Parser;
use ensemble_mdp_cli::args::Cli;
use ensemble_mdp_cli::commands;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
