//! Learning-rate sweeps: one run per `(optimizer, lr)` cell, run concurrently.

use std::fs;
use std::path::PathBuf;

use olion_core::optimizers::OptimizerKind;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::SweepConfig;
use crate::error::{HarnessError, Result};
use crate::output::{fmt_f64, write_file};
use crate::train::{run, RunStatus, LOSS_CSV};

pub const SWEEP_CSV: &str = "sweep.csv";
pub const SWEEP_CONFIG_JSON: &str = "sweep_config.json";
pub const SWEEP_HEADER: &str = "optimizer,lr,loss_at_metric_step,final_loss,status,failed_step";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub optimizer: OptimizerKind,
    pub lr: f64,
    /// Loss after `metric_step` steps, when the run got that far.
    pub loss_at_metric: Option<f64>,
    pub final_loss: Option<f64>,
    pub status: RunStatus,
    pub failed_step: Option<u64>,
    pub output_dir: PathBuf,
}

impl SweepRow {
    pub fn diverged(&self) -> bool {
        self.status == RunStatus::NonFiniteLoss
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub metric_step: u64,
    pub rows: Vec<SweepRow>,
    pub csv_path: PathBuf,
}

impl SweepTable {
    pub fn rows_for(&self, kind: OptimizerKind) -> impl Iterator<Item = &SweepRow> {
        self.rows.iter().filter(move |r| r.optimizer == kind)
    }

    /// Largest metric loss over the optimizer's cells; divergent or missing
    /// cells count as infinite.
    pub fn worst_cell(&self, kind: OptimizerKind) -> f64 {
        self.rows_for(kind)
            .map(|r| r.loss_at_metric.unwrap_or(f64::INFINITY))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Reads the loss at `step` back from a run's `loss.csv`.
fn loss_from_csv(dir: &std::path::Path, step: u64) -> Option<f64> {
    let text = fs::read_to_string(dir.join(LOSS_CSV)).ok()?;
    text.lines().skip(1).find_map(|line| {
        let mut it = line.split(',');
        let s = it.next()?.parse::<u64>().ok()?;
        let loss = it.next()?.parse::<f64>().ok()?;
        (s == step && loss.is_finite()).then_some(loss)
    })
}

/// Runs every cell and writes `sweep.csv` under the base output directory.
/// Cells that hit a non-finite loss are recorded as divergent; any other
/// error aborts the sweep.
pub fn lr_sweep(sweep: &SweepConfig) -> Result<SweepTable> {
    sweep.validate()?;
    let root = sweep.base_output_dir()?;
    write_file(&root.join(SWEEP_CONFIG_JSON), sweep.to_canonical_json())?;

    let cells: Vec<(OptimizerKind, usize)> = sweep
        .optimizers
        .iter()
        .flat_map(|&k| (0..sweep.lr_grid.len()).map(move |i| (k, i)))
        .collect();
    let rows = cells
        .par_iter()
        .map(|&(kind, i)| {
            let cfg = sweep.cell_config(kind, i)?;
            let at_metric = |curve_loss: Option<f64>| curve_loss.filter(|l| l.is_finite());
            match run(&cfg) {
                Ok(s) => {
                    let metric = if sweep.metric_step >= s.steps_completed {
                        Some(s.final_loss)
                    } else {
                        s.loss_curve.get(sweep.metric_step as usize).map(|r| r.loss)
                    };
                    Ok(SweepRow {
                        optimizer: kind,
                        lr: sweep.lr_grid[i],
                        loss_at_metric: at_metric(metric),
                        final_loss: Some(s.final_loss),
                        status: s.status,
                        failed_step: None,
                        output_dir: cfg.output_dir,
                    })
                }
                Err(HarnessError::NonFiniteLoss { step, .. }) => Ok(SweepRow {
                    optimizer: kind,
                    lr: sweep.lr_grid[i],
                    loss_at_metric: (sweep.metric_step < step)
                        .then(|| loss_from_csv(&cfg.output_dir, sweep.metric_step))
                        .flatten(),
                    final_loss: None,
                    status: RunStatus::NonFiniteLoss,
                    failed_step: Some(step),
                    output_dir: cfg.output_dir,
                }),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<Vec<_>>>()?;

    let opt = |x: Option<f64>| x.map(fmt_f64).unwrap_or_default();
    let mut csv = format!("{SWEEP_HEADER}\n");
    for r in &rows {
        let status = match r.status {
            RunStatus::Completed => "completed",
            RunStatus::ReachedTarget => "reached_target",
            RunStatus::NonFiniteLoss => "divergent",
        };
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.optimizer,
            fmt_f64(r.lr),
            opt(r.loss_at_metric),
            opt(r.final_loss),
            status,
            r.failed_step.map(|s| s.to_string()).unwrap_or_default()
        ));
    }
    let csv_path = root.join(SWEEP_CSV);
    write_file(&csv_path, csv)?;
    Ok(SweepTable {
        metric_step: sweep.metric_step,
        rows,
        csv_path,
    })
}
