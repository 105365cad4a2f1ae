//! Experiment driver for the low-rank stochastic Stokes-Darcy solver.

mod commands;
mod config;
mod ledger;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::CmdError;
use config::{Overrides, RunConfig};

#[derive(Parser)]
#[command(name = "sdlr", version, about = "Monte Carlo Stokes-Darcy runs with a shared low-rank factor")]
struct Cli {
    /// TOML key-value config; missing keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Print the effective config and exit.
    #[arg(long, global = true)]
    print_config: bool,
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// KL spectrum table and sample conductivity fields.
    KlReport,
    /// Low-rank runs over the theta list against the direct reference.
    ThetaSweep,
    /// Gram spectrum, energy ratios and the energy-selected theta.
    SelectTheta,
    /// Moment errors against a larger direct reference over a sample-size list.
    Convergence,
    /// One Monte Carlo run on the configured solver path.
    SolveOnce,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::KlReport => "kl-report",
            Command::ThetaSweep => "theta-sweep",
            Command::SelectTheta => "select-theta",
            Command::Convergence => "convergence",
            Command::SolveOnce => "solve-once",
        }
    }
}

fn load(cli: &Cli) -> Result<RunConfig, CmdError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path).map_err(|e| match e {
            config::ConfigError::Read { .. } => CmdError::Io(e.to_string()),
            other => CmdError::Config(other.to_string()),
        })?,
        None => RunConfig::default(),
    };
    cli.overrides.apply(&mut cfg);
    Ok(cfg)
}

fn run(cli: &Cli, cfg: &RunConfig, rec: &mut ledger::Record) -> Result<(), CmdError> {
    match cli.command {
        Command::KlReport => commands::kl_report(cfg, rec),
        Command::ThetaSweep => commands::theta_sweep_cmd(cfg, rec),
        Command::SelectTheta => commands::select_theta_cmd(cfg, rec).map(|_| ()),
        Command::Convergence => commands::convergence_cmd(cfg, rec),
        Command::SolveOnce => commands::solve_once(cfg, rec),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match load(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    if cli.print_config {
        if let Err(e) = cfg.validate() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
        print!("{}", cfg.to_toml());
        return ExitCode::SUCCESS;
    }
    if cfg.workers > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cfg.workers).build_global() {
            eprintln!("error: worker pool: {e}");
            return ExitCode::from(1);
        }
    }
    if let Err(e) = std::fs::create_dir_all(&cfg.output_dir) {
        eprintln!("error: cannot create {}: {e}", cfg.output_dir.display());
        return ExitCode::from(3);
    }
    let mut rec = ledger::Record::new(cli.command.name(), cfg.hash(), cfg.seed);
    let result = cfg.validate().map_err(|e| CmdError::Config(e.to_string())).and_then(|()| run(&cli, &cfg, &mut rec));
    if let Err(e) = &result {
        rec.status = "error".into();
        rec.error = Some(e.to_string());
    }
    if let Err(e) = ledger::append(&cfg.output_dir.join("ledger.jsonl"), &rec) {
        eprintln!("error: ledger: {e}");
        return ExitCode::from(3);
    }
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
