//! `qpke`: run verifications, protocol sessions, attacks and scans.
//!
//! Exit status: 0 when every asserted check passes, 1 on an assertion
//! failure, 2 on a usage or parameter error.

mod args;
mod commands;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Profile, PROFILE_ENV};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let env = std::env::var(PROFILE_ENV).ok();
    let profile = match Profile::resolve(cli.profile, env.as_deref()) {
        Ok(p) => p,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(2);
        }
    };
    match commands::run(&cli, profile) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
