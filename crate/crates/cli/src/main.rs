//! `hostcap`: batch front-end for stability ranges, delay margins, root
//! loci and time-domain validation runs of multi-inverter PV plants.

mod commands;
mod config;
mod emit;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use commands::{execute, Command};
use config::{parse_config, DEFAULT_PROFILE};
use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "hostcap", version, about = "Stable grid-hosting capacity of PV plants with delayed digital control")]
struct Args {
    /// Analysis to run.
    #[arg(value_enum)]
    command: Option<Command>,

    /// TOML run configuration; the shipped default profile when omitted.
    config: Option<PathBuf>,

    /// Override a configuration key, e.g. `--set groups.0.Td_us=82.5`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    /// Print the shipped default profile and exit.
    #[arg(long)]
    print_default_profile: bool,
}

fn run(args: Args) -> Result<(), CliError> {
    if args.print_default_profile {
        print!("{DEFAULT_PROFILE}");
        return Ok(());
    }
    let Some(cmd) = args.command else {
        return Err(CliError::Validation(vec!["no command given; see --help".into()]));
    };
    let text = match &args.config {
        Some(p) => std::fs::read_to_string(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?,
        None => DEFAULT_PROFILE.to_string(),
    };
    let cfg = parse_config(&text, &args.overrides).map_err(CliError::Validation)?;
    let artifacts = execute(cmd, &cfg)?;
    for w in &artifacts.warnings {
        eprintln!("warning: {w}");
    }
    let written = artifacts.write(cfg.output.directory.as_ref(), cmd.name(), &cfg.canonical)?;
    for p in written {
        println!("{}", p.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.report());
            e.exit_code()
        }
    }
}
