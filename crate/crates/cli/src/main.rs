//! `seqclt`: change-point tests and limit-theory checks for dependent data.
//!
//! Exit codes: 0 success, 1 invalid input, 2 numerical failure, 3 I/O.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use seqclt::Error;

use crate::config::{ExperimentConfig, Overrides};
use crate::output::Staging;

#[derive(Debug, Parser)]
#[command(name = "seqclt", version, about = "Sequential empirical processes and CUSUM change-point tests")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for replication-level parallelism.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory; overrides the config (default `results`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate one path of the configured model.
    Simulate,
    /// Compute T_n on one path and decide against Kiefer critical values.
    Test {
        /// Test this path (CSV as written by `simulate`) instead of simulating.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Monte Carlo quantiles of the Kiefer-bridge supremum.
    CriticalValues,
    /// Spectral report for a finite chain.
    Spectral,
    /// Multiple-mixing fit and moment growth.
    VerifyMixing,
    /// Bracketing profile and entropy summability.
    VerifyEntropy,
    /// Full experiment: T_n replications, critical values, enabled analyses.
    Run,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Test { .. } => "test",
            Command::CriticalValues => "critical-values",
            Command::Spectral => "spectral",
            Command::VerifyMixing => "verify-mixing",
            Command::VerifyEntropy => "verify-entropy",
            Command::Run => "run",
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Validation { .. } | Error::Parse(_) => 1,
        Error::Numeric(_) | Error::GapCollapse { .. } | Error::Factorization { .. } | Error::InfeasibleBudget { .. } => 2,
        Error::Io(_) | Error::Csv(_) => 3,
    }
}

fn execute(cli: &Cli) -> Result<Vec<String>, Error> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::Validation { field: "config".into(), reason: "missing; pass --config PATH".into() })?;
    let overrides = Overrides { seed: cli.seed, workers: cli.workers, out: cli.out.clone() };
    let cfg = ExperimentConfig::load(path, &overrides)?;
    if let Some(w) = cfg.workers {
        seqclt::exec::set_workers(w);
    }
    let out = cfg.out_dir();
    let created = !out.exists();
    let result = run_command(cli, &cfg);
    if result.is_err() && created {
        // Only succeeds if nothing else was put there.
        let _ = std::fs::remove_dir(&out);
    }
    result
}

fn run_command(cli: &Cli, cfg: &ExperimentConfig) -> Result<Vec<String>, Error> {
    let mut st = Staging::new(&cfg.out_dir())?;
    let mut lines = match &cli.command {
        Command::Simulate => commands::simulate(cfg, &mut st),
        Command::Test { input } => commands::test(cfg, input.as_deref(), &mut st),
        Command::CriticalValues => commands::critical_values_cmd(cfg, &mut st),
        Command::Spectral => commands::spectral(cfg, &mut st),
        Command::VerifyMixing => commands::verify_mixing(cfg, &mut st),
        Command::VerifyEntropy => commands::verify_entropy(cfg, &mut st),
        Command::Run => commands::run(cfg, &mut st),
    }?;
    let written = st.commit(cli.command.name(), cfg.seed(), cfg.hash())?;
    lines.push(format!("wrote {} files to {}", written.len(), cfg.out_dir().display()));
    Ok(lines)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(&cli) {
        Ok(lines) => {
            for l in lines {
                println!("{l}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
