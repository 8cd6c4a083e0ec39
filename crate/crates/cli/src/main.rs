use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

mod commands;
mod config;
mod store;
mod sweep;

use config::{RunConfig, SweepManifest};

#[derive(Parser)]
#[command(name = "inls", version, about = "Ground states, blow-up criteria and evolution for radial inhomogeneous NLS")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run configuration (a sweep manifest for `sweep`).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output root; overrides `outputs` in the config. Defaults to `runs`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for randomized checks; overrides `seed` in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for `sweep`; overrides `max_parallel`.
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve for the ground state and write its certificate.
    GroundState,
    /// Evaluate the blow-up criteria on the configured datum.
    Classify,
    /// Integrate the configured datum in time.
    Evolve,
    /// Run the invariant suites (Pohozaev, GN bound, scaling, Hardy, conservation).
    CheckIdentities,
    /// Run a cartesian sweep of evolutions in parallel.
    Sweep,
}

fn read_config(path: Option<&Path>) -> Result<String> {
    let path = path.context("--config is required")?;
    std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn output_root(cli: &Cli, from_config: Option<&PathBuf>) -> PathBuf {
    cli.out.clone().or_else(|| from_config.cloned()).unwrap_or_else(|| PathBuf::from("runs"))
}

fn run(cli: &Cli) -> Result<()> {
    let text = read_config(cli.config.as_deref())?;
    if let Command::Sweep = cli.command {
        let mut manifest = SweepManifest::parse(&text)?;
        if let Some(seed) = cli.seed {
            manifest.base.seed = seed;
        }
        let out = output_root(cli, manifest.base.outputs.as_ref());
        let rep = sweep::cmd_sweep(&manifest, &out, cli.workers)?;
        println!(
            "{}: {} computed, {} reused, {} failed",
            rep.dir.join("summary.csv").display(),
            rep.computed,
            rep.reused,
            rep.failed
        );
        return Ok(());
    }
    let mut cfg = RunConfig::parse(&text)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let out = output_root(cli, cfg.outputs.as_ref());
    match cli.command {
        Command::GroundState => commands::cmd_ground_state(&cfg, &out)?,
        Command::Classify => commands::cmd_classify(&cfg, &out)?,
        Command::Evolve => commands::cmd_evolve(&cfg, &out)?,
        Command::CheckIdentities => commands::cmd_check_identities(&cfg, &out)?,
        Command::Sweep => unreachable!(),
    };
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
