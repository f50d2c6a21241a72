//! `theory-lab`: Monte-Carlo study of the isotropy constant over a grid.

use std::path::{Path, PathBuf};

use olion_core::theory_lab::{fit_scaling_law, law_predictor, run_scaling_study, ScalingFit, ScalingStudy};
use serde::{Deserialize, Serialize};

use crate::config::{apply_overrides, load_document};
use crate::error::{HarnessError, Result};
use crate::output::{fmt_f64, write_file, write_json};

pub const SAMPLES_CSV: &str = "eps_samples.csv";
pub const CELLS_CSV: &str = "eps_cells.csv";
pub const FIT_JSON: &str = "fit.json";

/// Square cells `d × d` at a fixed rank.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SquareGrid {
    pub dims: Vec<usize>,
    pub rank: usize,
}

/// Either an explicit `grid` of `[d1, d2, r]` cells, a `square` grid, or both
/// (explicit cells first).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabConfig {
    #[serde(default)]
    pub grid: Vec<(usize, usize, usize)>,
    pub square: Option<SquareGrid>,
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_lab_dir")]
    pub output_dir: PathBuf,
}

fn default_lab_dir() -> PathBuf {
    PathBuf::from("runs/theory_lab")
}

impl LabConfig {
    pub fn load(path: &Path, overrides: &[(String, String)]) -> Result<Self> {
        let mut doc = load_document(path)?;
        apply_overrides(&mut doc, overrides)?;
        let cfg: Self = serde_json::from_value(doc).map_err(|e| HarnessError::ConfigInvalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn cells(&self) -> Vec<(usize, usize, usize)> {
        let mut cells = self.grid.clone();
        if let Some(sq) = &self.square {
            cells.extend(sq.dims.iter().map(|&d| (d, d, sq.rank)));
        }
        cells
    }

    pub fn validate(&self) -> Result<()> {
        let cells = self.cells();
        if cells.is_empty() {
            return Err(HarnessError::ConfigInvalid("theory-lab grid is empty".into()));
        }
        if self.trials == 0 {
            return Err(HarnessError::ConfigInvalid("trials must be at least 1".into()));
        }
        if let Some(&(d1, d2, r)) = cells.iter().find(|&&(d1, d2, r)| r == 0 || r > d1.min(d2)) {
            return Err(HarnessError::ConfigInvalid(format!(
                "cell {d1}x{d2} cannot have rank {r}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct LabReport {
    pub study: ScalingStudy,
    /// Absent when the grid is too small to fit; see `fit_error`.
    pub fit: Option<ScalingFit>,
    pub fit_error: Option<String>,
}

/// Runs the study, writes per-sample and per-cell CSVs and the fit.
pub fn run_theory_lab(cfg: &LabConfig) -> Result<LabReport> {
    cfg.validate()?;
    let study = run_scaling_study(&cfg.cells(), cfg.trials, cfg.seed)?;
    let out = &cfg.output_dir;
    write_json(&out.join("lab_config.json"), cfg)?;

    let mut samples = Vec::new();
    study
        .write_csv(&mut samples)
        .map_err(|e| HarnessError::io(out.join(SAMPLES_CSV), e))?;
    write_file(&out.join(SAMPLES_CSV), samples)?;

    let mut cells = String::from("d1,d2,r,trials,mean_eps,std_eps,law_predictor\n");
    for c in &study.cells {
        let n = c.samples.len() as f64;
        let mean = c.mean_eps();
        let var = if c.samples.len() > 1 {
            c.samples.iter().map(|s| (s.eps - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        cells.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            c.d1,
            c.d2,
            c.r,
            c.samples.len(),
            fmt_f64(mean),
            fmt_f64(var.sqrt()),
            fmt_f64(law_predictor(c.d1, c.d2, c.r))
        ));
    }
    write_file(&out.join(CELLS_CSV), cells)?;

    let (fit, fit_error) = match fit_scaling_law(&study) {
        Ok(f) => (Some(f), None),
        Err(e) => (None, Some(e.to_string())),
    };
    write_json(
        &out.join(FIT_JSON),
        &serde_json::json!({ "fit": fit, "error": fit_error }),
    )?;
    Ok(LabReport { study, fit, fit_error })
}
