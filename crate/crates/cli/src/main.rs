// SPDX-License-Identifier: MIT OR Apache-2.0

mod args;
mod commands;
mod run;
mod source;

use std::process::ExitCode;

use clap::Parser;

use crate::run::{MissingInput, Usage, Violation};

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<MissingInput>() || cause.is::<Usage>() {
            return 2;
        }
        if cause.is::<Violation>() {
            return 1;
        }
    }
    1
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = args::Cli::parse();
    let argv: Vec<String> = std::env::args().skip(1).collect();
    match commands::dispatch(&cli.command, argv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
