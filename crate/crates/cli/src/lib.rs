//! Experiment driver behind the `aniso-hardy` binary.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;

use std::path::{Path, PathBuf};

use clap::Parser;

pub use commands::{Outcome, Subcommand};
pub use config::{ConfigError, ExperimentConfig, MomentOrder};

#[derive(Debug, Parser)]
#[command(
    name = "aniso-hardy",
    version,
    about = "Estimate experiments for anisotropic mixed-norm Hardy spaces"
)]
pub struct Cli {
    #[arg(value_enum)]
    pub subcommand: Subcommand,
    /// TOML config; keys missing from it take the bundled defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output root; runs go to `<out>/<subcommand>/<timestamp>-seed<seed>/`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,
    /// `KEY=VALUE` with a dotted key, e.g. `exponents.p=[0.5,0.5]`. Repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

/// Resolves the config, runs the subcommand and returns the exit code.
pub fn run(cli: &Cli) -> i32 {
    let mut cfg = match ExperimentConfig::load(cli.config.as_deref(), &cli.overrides) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config invalid: {e}");
            return 2;
        }
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.output_dir = o.clone();
    }
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
        {
            log::warn!("thread pool already configured: {e}");
        }
    }
    match commands::execute(cli.subcommand, &cfg) {
        Ok(outcome) => {
            for line in &outcome.lines {
                println!("{line}");
            }
            println!("output: {}", outcome.dir.display());
            outcome.exit_code
        }
        Err(e) => {
            eprintln!("{}: {e}", cli.subcommand.name());
            2
        }
    }
}

/// Creates `<root>/<name>/<timestamp>-seed<seed>`, suffixing on collision.
pub fn run_dir(root: &Path, name: &str, seed: u64) -> std::io::Result<PathBuf> {
    let parent = root.join(name);
    std::fs::create_dir_all(&parent)?;
    let stamp = chrono::Local::now().format("%Y%m%dT%H%M%S%.3f");
    let base = format!("{stamp}-seed{seed}");
    for k in 0.. {
        let dir = if k == 0 {
            parent.join(&base)
        } else {
            parent.join(format!("{base}-{k}"))
        };
        match std::fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(e),
        }
    }
    unreachable!()
}
