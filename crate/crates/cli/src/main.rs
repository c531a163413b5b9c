//! `nlkpp`: command-line front end for the nonlocal KPP-Fisher numerics.
//!
//! Exit codes: 0 on success, 1 for bad input or configuration, 2 when a
//! numerical method fails to converge.

mod artifacts;
mod commands;
mod config;

use std::process::ExitCode;

use clap::Parser;

use artifacts::Artifacts;
use config::{Cli, ExperimentConfig};

fn exit_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<nlkpp::Error>() {
        Some(err) if err.is_numeric() => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(u8::from(e.use_stderr()));
        }
    };
    let cfg = match ExperimentConfig::resolve(cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(1);
        }
    };
    if let Some(n) = cfg.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let mut out = match Artifacts::create(&cfg.out) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(1);
        }
    };
    let result = commands::run(&cfg, &mut out);
    let code = match &result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(e)
        }
    };
    if let Err(e) = out.finish(&cfg, result.err().map(|e| format!("{e:#}"))) {
        eprintln!("error: {e:#}");
        return ExitCode::from(1);
    }
    ExitCode::from(code)
}
