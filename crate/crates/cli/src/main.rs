#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod connect_check;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{error::ErrorKind, Parser, Subcommand};
use serde_json::json;

use commands::{envelope, execute, Command, Failure};
use config::{parse_grid, Energies, ModelKind, Overrides, RunConfig};

/// Discrete phase integral analysis of five-term recursions.
#[derive(Debug, Parser)]
#[command(name = "dpi", version)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
    /// INI file with [model], [run] and [tolerances] sections.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, allow_hyphen_values = true, conflicts_with = "energy_grid")]
    energy: Option<f64>,
    /// `start:stop:count`.
    #[arg(long, global = true, allow_hyphen_values = true, value_parser = parse_grid)]
    energy_grid: Option<Energies>,
    /// synth1, fe8 or table.
    #[arg(long, global = true)]
    model: Option<ModelKind>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Large parameter J (spin for fe8).
    #[arg(long, global = true)]
    j: Option<f64>,
    /// CSV table `m,w,t1,t2` for the table model.
    #[arg(long, global = true)]
    table: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Sub {
    /// Build the operator and report symmetry and quasiclassicality.
    Model,
    /// Critical curves U0, Upi, U* on a grid.
    Curves,
    /// Turning points, local expansions and failure zones.
    Turning,
    /// DPI wavefunction of one branch.
    Wavefunction,
    /// Connection at B-type points checked against the exact recursion.
    ConnectTest,
    /// Exact spectrum, eigenvector and recursion.
    Oracle,
    /// Turning-point summary over an energy grid.
    Scan,
}

impl From<Sub> for Command {
    fn from(s: Sub) -> Self {
        match s {
            Sub::Model => Command::Model,
            Sub::Curves => Command::Curves,
            Sub::Turning => Command::Turning,
            Sub::Wavefunction => Command::Wavefunction,
            Sub::ConnectTest => Command::ConnectTest,
            Sub::Oracle => Command::Oracle,
            Sub::Scan => Command::Scan,
        }
    }
}

fn error_kind(f: &Failure) -> String {
    match f {
        Failure::Config(_) => "Config".into(),
        Failure::Io(_) => "Io".into(),
        Failure::Numerical(e) => {
            let dbg = format!("{e:?}");
            dbg.split(|c: char| !c.is_alphanumeric()).next().unwrap_or("Numerical").to_string()
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let overrides = Overrides {
        model: cli.model,
        out: cli.out.clone(),
        energies: cli.energy.map(|energy| Energies::Single { energy }).or(cli.energy_grid),
        seed: cli.seed,
        j: cli.j,
        table: cli.table.clone(),
    };
    let cfg = match RunConfig::load(cli.config.as_deref(), &overrides) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("dpi: configuration error: {e}");
            return ExitCode::from(1);
        }
    };
    let command = Command::from(cli.command);
    match execute(command, &cfg) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(f @ Failure::Config(_)) => {
            eprintln!("dpi: {f}");
            ExitCode::from(1)
        }
        Err(f) => {
            eprintln!("dpi: {f}");
            let doc = envelope(&cfg, command, json!({ "kind": error_kind(&f), "message": f.to_string() }));
            if let Ok(bytes) = output::json_bytes(&doc) {
                if let Err(e) = output::write_atomic(&cfg.out, "error.json", &bytes) {
                    eprintln!("dpi: cannot write error.json: {e}");
                }
            }
            ExitCode::from(2)
        }
    }
}
