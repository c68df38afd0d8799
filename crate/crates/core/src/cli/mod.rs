//! Command-line experiment runner.

mod commands;
pub mod config;
pub mod manifest;
mod sweep;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

pub use commands::{run_cell, CellSummary};
pub use config::{parse_config, CellCommand, ConfigIssue, ExperimentConfig};
pub use manifest::{runs_root, RunDir, RunManifest, RUNS_DIR_ENV};
pub use sweep::{sweep, SweepOutcome, SUMMARY_HEADER};

use crate::error::Result;

#[derive(Debug, Parser)]
#[command(
    name = "pme-lab",
    version,
    about = "Porous medium equation with combustion reaction: solver and experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evolve `λψ` under the configured reaction.
    Solve(ConfigArg),
    /// Shoot the self-similar profile and report its first zero.
    ShootXi {
        #[arg(long)]
        m: f64,
        #[arg(long)]
        theta: f64,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
    },
    /// Stationary bumps and their widths for a list of heights.
    ProfileQb {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long, value_delimiter = ',', required = true)]
        b_list: Vec<f64>,
    },
    /// Positive self-similar profile of the semilinear surrogate.
    HwProfile {
        #[arg(long)]
        p: f64,
        #[arg(long)]
        m: f64,
        #[arg(long)]
        theta: f64,
        #[arg(long)]
        gamma: f64,
        /// Integration end; defaults to a value that reaches the plateau.
        #[arg(long = "Y")]
        y_end: Option<f64>,
    },
    /// Bisect for the threshold multiplier.
    FindLambda {
        #[command(flatten)]
        config: ConfigArg,
        /// Overrides `[threshold] tol`.
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Front-law fits on a saved trace.
    Asymptotics {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        y0: f64,
        #[arg(long)]
        p: f64,
        /// Grid spacing of the run, used as the resolution floor.
        #[arg(long)]
        dx: Option<f64>,
    },
    /// Run every `(p, m)` cell of the `[sweep]` block.
    Sweep {
        #[command(flatten)]
        config: ConfigArg,
        /// Overrides `[sweep] workers`.
        #[arg(long)]
        workers: Option<usize>,
    },
}

#[derive(Debug, Args)]
pub struct ConfigArg {
    #[arg(long)]
    pub config: PathBuf,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Solve(_) => "solve",
            Command::ShootXi { .. } => "shoot-xi",
            Command::ProfileQb { .. } => "profile-qb",
            Command::HwProfile { .. } => "hw-profile",
            Command::FindLambda { .. } => "find-lambda",
            Command::Asymptotics { .. } => "asymptotics",
            Command::Sweep { .. } => "sweep",
        }
    }
}

fn read_config(path: &Path) -> Result<ExperimentConfig> {
    config::load_config(&std::fs::read_to_string(path)?)
}

/// Runs one subcommand under `root`, returning the run directory and its
/// manifest.
pub fn run(command: &Command, root: &Path) -> Result<(PathBuf, RunManifest)> {
    let name = command.name();
    let with_config = |path: &Path| -> Result<ExperimentConfig> { read_config(path) };
    match command {
        Command::Solve(c) => {
            let cfg = with_config(&c.config)?;
            let mut dir = RunDir::create(root, name)?;
            commands::solve(&cfg, &mut dir)?;
            finish_with_config(dir, &cfg)
        }
        Command::ShootXi { m, theta, tol } => {
            let mut dir = RunDir::create(root, name)?;
            commands::shoot_xi(*m, *theta, *tol, &mut dir)?;
            finish(
                dir,
                serde_json::json!({ "m": m, "theta": theta, "tol": tol }),
            )
        }
        Command::ProfileQb { config, b_list } => {
            let cfg = with_config(&config.config)?;
            let mut dir = RunDir::create(root, name)?;
            commands::profile_qb(&cfg, b_list, &mut dir)?;
            let mut snapshot = serde_json::to_value(&cfg)?;
            snapshot["b_list"] = serde_json::json!(b_list);
            finish(dir, snapshot)
        }
        Command::HwProfile {
            p,
            m,
            theta,
            gamma,
            y_end,
        } => {
            let mut dir = RunDir::create(root, name)?;
            commands::hw_profile(*p, *m, *theta, *gamma, *y_end, &mut dir)?;
            finish(
                dir,
                serde_json::json!({ "p": p, "m": m, "theta": theta, "gamma": gamma, "Y": y_end }),
            )
        }
        Command::FindLambda { config, tol } => {
            let mut cfg = with_config(&config.config)?;
            if let Some(tol) = tol {
                cfg.threshold.tol = *tol;
                let (issues, _) = cfg.check(None);
                if let Some(i) = issues.first() {
                    return Err(crate::Error::Config(i.to_string()));
                }
            }
            let mut dir = RunDir::create(root, name)?;
            commands::find_lambda(&cfg, &mut dir)?;
            finish_with_config(dir, &cfg)
        }
        Command::Asymptotics { trace, y0, p, dx } => {
            let text = std::fs::read_to_string(trace)?;
            let mut dir = RunDir::create(root, name)?;
            commands::asymptotics(&text, *y0, *p, *dx, &mut dir)?;
            let digest = manifest::digest(text.as_bytes());
            finish(
                dir,
                serde_json::json!({ "trace": trace, "trace_sha256": digest, "y0": y0, "p": p, "dx": dx }),
            )
        }
        Command::Sweep { config, workers } => {
            let mut cfg = with_config(&config.config)?;
            if let Some(w) = workers {
                let sweep = cfg.sweep.get_or_insert_with(|| config::SweepConfig {
                    p: None,
                    m: None,
                    workers: 1,
                    command: CellCommand::Solve,
                });
                sweep.workers = (*w).max(1);
            }
            let mut dir = RunDir::create(root, name)?;
            sweep::sweep(&cfg, &mut dir)?;
            finish_with_config(dir, &cfg)
        }
    }
}

fn finish(dir: RunDir, config: serde_json::Value) -> Result<(PathBuf, RunManifest)> {
    let path = dir.path().to_path_buf();
    Ok((path, dir.finish(config)?))
}

fn finish_with_config(mut dir: RunDir, cfg: &ExperimentConfig) -> Result<(PathBuf, RunManifest)> {
    for w in cfg.check(None).1 {
        dir.warn(w);
    }
    dir.write("config.toml", cfg.to_toml().as_bytes())?;
    finish(dir, serde_json::to_value(cfg)?)
}
