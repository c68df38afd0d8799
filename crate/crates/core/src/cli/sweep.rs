use std::fmt::Write as _;
use std::path::PathBuf;

use rayon::prelude::*;
use rayon::ThreadPoolBuilder;

use super::commands::{run_cell, CellSummary};
use super::config::{CellCommand, ExperimentConfig};
use super::manifest::{RunDir, RunManifest};
use crate::error::{Error, Result};

pub const SUMMARY_HEADER: &str =
    "cell,p,m,status,u_max_end,r_end,mass_end,verdict,lambda_lo,lambda_hi,probes,error";

#[derive(Debug)]
pub struct SweepOutcome {
    pub p: f64,
    pub m: f64,
    pub dir: PathBuf,
    /// `Err` holds the failure message; the cell's manifest is still written.
    pub result: std::result::Result<CellSummary, String>,
    pub manifest: RunManifest,
}

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(T::to_string).unwrap_or_default()
}

/// Runs every `(p, m)` cell in its own subdirectory `cells/NNN/` and writes
/// `summary.csv`. A failing cell is recorded and the others continue.
pub fn sweep(cfg: &ExperimentConfig, dir: &mut RunDir) -> Result<Vec<SweepOutcome>> {
    let sweep = cfg.sweep.clone().unwrap_or(super::config::SweepConfig {
        p: None,
        m: None,
        workers: 1,
        command: CellCommand::Solve,
    });
    let ps = sweep.p.clone().unwrap_or_else(|| vec![cfg.reaction.p]);
    let ms = sweep.m.clone().unwrap_or_else(|| vec![cfg.reaction.m]);
    let cells: Vec<(usize, f64, f64)> = ps
        .iter()
        .flat_map(|&p| ms.iter().map(move |&m| (p, m)))
        .enumerate()
        .map(|(i, (p, m))| (i, p, m))
        .collect();

    let pool = ThreadPoolBuilder::new()
        .num_threads(sweep.workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let root = dir.path().to_path_buf();
    let outcomes: Vec<Result<SweepOutcome>> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(i, p, m)| {
                let mut cell_cfg = cfg.clone();
                cell_cfg.reaction.p = p;
                cell_cfg.reaction.m = m;
                cell_cfg.sweep = None;
                let path = root.join("cells").join(format!("{i:03}"));
                let mut cell = RunDir::create_named(path.clone(), sweep.command_name())?;
                let (issues, warnings) = cell_cfg.check(None);
                for w in warnings {
                    cell.warn(w);
                }
                let result = if let Some(issue) = issues.first() {
                    Err(issue.to_string())
                } else {
                    run_cell(&cell_cfg, sweep.command, &mut cell).map_err(|e| e.to_string())
                };
                if let Err(e) = &result {
                    cell.write("error.txt", format!("{e}\n").as_bytes())?;
                }
                cell.write("config.toml", cell_cfg.to_toml().as_bytes())?;
                let manifest = cell.finish(serde_json::to_value(&cell_cfg)?)?;
                Ok(SweepOutcome {
                    p,
                    m,
                    dir: path,
                    result,
                    manifest,
                })
            })
            .collect()
    });
    let outcomes: Vec<SweepOutcome> = outcomes.into_iter().collect::<Result<_>>()?;

    let mut summary = format!("{SUMMARY_HEADER}\n");
    for (i, o) in outcomes.iter().enumerate() {
        let (status, s, err) = match &o.result {
            Ok(s) => ("ok", s.clone(), String::new()),
            Err(e) => (
                "failed",
                CellSummary::default(),
                e.replace([',', '\n'], ";"),
            ),
        };
        let _ = writeln!(
            summary,
            "{i:03},{},{},{status},{},{},{},{},{},{},{},{err}",
            o.p,
            o.m,
            opt(&s.u_max_end),
            opt(&s.r_end),
            opt(&s.mass_end),
            opt(&s.verdict),
            opt(&s.lambda_lo),
            opt(&s.lambda_hi),
            opt(&s.probes),
        );
        for f in &o.manifest.files {
            dir.adopt(&format!("cells/{i:03}/{}", f.path))?;
        }
        dir.adopt(&format!("cells/{i:03}/manifest.json"))?;
    }
    dir.write("summary.csv", summary.as_bytes())?;
    Ok(outcomes)
}

impl super::config::SweepConfig {
    fn command_name(&self) -> &'static str {
        match self.command {
            CellCommand::Solve => "solve",
            CellCommand::FindLambda => "find-lambda",
        }
    }
}
