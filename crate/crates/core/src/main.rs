use std::process::ExitCode;

use clap::Parser;
use covertime_lab::cli::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("covertime-lab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
