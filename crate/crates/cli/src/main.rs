mod args;
mod commands;
mod config;
mod output;

use std::process::ExitCode;

use anyhow::Result;
use clap::error::ErrorKind;
use clap::Parser;

use crate::args::{Command, RunConfig};

fn exit_code(err: &anyhow::Error) -> u8 {
    let stalled = err
        .chain()
        .filter_map(|e| e.downcast_ref::<sparse_rsp::Error>())
        .any(|e| e.is_non_convergence());
    if stalled {
        2
    } else {
        1
    }
}

fn run(config: RunConfig) -> Result<()> {
    if let Some(jobs) = config.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs as usize)
            .build_global()?;
    }
    match &config.command {
        Command::Spmin(args) => commands::spmin_command(args),
        Command::Policy(args) => commands::policy_command(args),
        Command::Dissim(args) => commands::dissim_command(args),
        Command::Cluster(args) => commands::cluster_command(args),
        Command::Check(check) => commands::check_command(check),
    }
}

fn main() -> ExitCode {
    let argv = match config::merge(std::env::args_os().collect()) {
        Ok(argv) => argv,
        Err(err) => {
            eprintln!("error: {err:#}");
            return ExitCode::from(1);
        }
    };
    let config = match RunConfig::try_parse_from(argv) {
        Ok(config) => config,
        Err(err) => {
            let _ = err.print();
            return match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(config) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
