use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    icvec_cli::main_with(icvec_cli::Cli::parse())
}
