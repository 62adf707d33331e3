use std::process::ExitCode;

use clap::Parser;

use besov_picard::cli::{run, Cli};

fn main() -> ExitCode {
    ExitCode::from(run(Cli::parse()))
}
