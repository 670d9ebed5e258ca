use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    okl_cli::main_with(okl_cli::args::Cli::parse())
}
