//! Run and sweep configuration.
//!
//! Configs are read from TOML or JSON into a generic document, `--key value`
//! overrides are applied to dotted paths, and the result is resolved against
//! the optimizer's defaults. The resolved [`RunConfig`] is echoed as canonical
//! JSON, which loads back to the same config.

use std::path::{Path, PathBuf};

use olion_core::geometry::PolarMode;
use olion_core::optimizers::{HyperParams, LrSchedule, OptimizerKind, ScheduleKind};
use olion_core::problems::{build_problem, Problem, ProblemSpec};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{HarnessError, Result};

pub const DEFAULT_DIAG_INTERVAL: u64 = 10;

/// Gradient source for each step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatchMode {
    #[default]
    Full,
    /// Minibatches of this many samples, reshuffled every epoch.
    Minibatch(usize),
}

/// Which polar factor OLion and Muon use. Newton–Schulz takes its step count
/// from `hyperparams.ns_steps`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolarChoice {
    Exact,
    #[default]
    NewtonSchulz,
}

/// A fully resolved training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemSpec,
    pub optimizer: OptimizerKind,
    pub hyperparams: HyperParams,
    pub schedule: LrSchedule,
    pub steps: u64,
    pub batch: BatchMode,
    pub seed: u64,
    pub diag_interval: u64,
    pub output_dir: PathBuf,
    pub checkpoint_interval: Option<u64>,
    pub polar_mode: PolarChoice,
    /// Clip the global gradient Frobenius norm to this value. Off by default.
    pub grad_clip: Option<f64>,
    /// Stop before the first step whose loss is at or below this value.
    pub stop_at_loss: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PartialHyperParams {
    lr: Option<f64>,
    beta1: Option<f64>,
    beta2: Option<f64>,
    weight_decay: Option<f64>,
    ns_steps: Option<usize>,
    rms_target: Option<f64>,
    adam_eps: Option<f64>,
}

impl PartialHyperParams {
    fn apply(&self, base: HyperParams) -> HyperParams {
        HyperParams {
            lr: self.lr.unwrap_or(base.lr),
            beta1: self.beta1.unwrap_or(base.beta1),
            beta2: self.beta2.unwrap_or(base.beta2),
            weight_decay: self.weight_decay.unwrap_or(base.weight_decay),
            ns_steps: self.ns_steps.unwrap_or(base.ns_steps),
            rms_target: self.rms_target.unwrap_or(base.rms_target),
            adam_eps: self.adam_eps.unwrap_or(base.adam_eps),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSchedule {
    #[serde(default = "default_schedule_kind")]
    kind: ScheduleKind,
    #[serde(default)]
    warmup_steps: u64,
    total_steps: Option<u64>,
    lr_max: Option<f64>,
    lr_min: Option<f64>,
}

fn default_schedule_kind() -> ScheduleKind {
    ScheduleKind::Constant
}

impl Default for RawSchedule {
    fn default() -> Self {
        Self {
            kind: default_schedule_kind(),
            warmup_steps: 0,
            total_steps: None,
            lr_max: None,
            lr_min: None,
        }
    }
}

fn default_diag_interval() -> u64 {
    DEFAULT_DIAG_INTERVAL
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRunConfig {
    problem: ProblemSpec,
    optimizer: OptimizerKind,
    #[serde(default)]
    hyperparams: PartialHyperParams,
    #[serde(default)]
    schedule: RawSchedule,
    steps: u64,
    #[serde(default)]
    batch: BatchMode,
    #[serde(default)]
    seed: u64,
    #[serde(default = "default_diag_interval")]
    diag_interval: u64,
    output_dir: Option<PathBuf>,
    checkpoint_interval: Option<u64>,
    #[serde(default)]
    polar_mode: PolarChoice,
    grad_clip: Option<f64>,
    stop_at_loss: Option<f64>,
}

impl RawRunConfig {
    fn resolve(self) -> RunConfig {
        let mut hyperparams = self.hyperparams.apply(HyperParams::defaults_for(self.optimizer));
        let s = self.schedule;
        let lr_max = s.lr_max.unwrap_or(hyperparams.lr);
        if self.hyperparams.lr.is_none() {
            hyperparams.lr = lr_max;
        }
        let lr_min = s.lr_min.unwrap_or(match s.kind {
            ScheduleKind::Constant => lr_max,
            _ => 0.0,
        });
        let schedule = LrSchedule {
            kind: s.kind,
            warmup_steps: s.warmup_steps,
            total_steps: s.total_steps.unwrap_or(self.steps),
            lr_max,
            lr_min,
        };
        let output_dir = self.output_dir.unwrap_or_else(|| {
            PathBuf::from("runs").join(format!("{}-{}-seed{}", self.problem.name(), self.optimizer, self.seed))
        });
        RunConfig {
            problem: self.problem,
            optimizer: self.optimizer,
            hyperparams,
            schedule,
            steps: self.steps,
            batch: self.batch,
            seed: self.seed,
            diag_interval: self.diag_interval,
            output_dir,
            checkpoint_interval: self.checkpoint_interval,
            polar_mode: self.polar_mode,
            grad_clip: self.grad_clip,
            stop_at_loss: self.stop_at_loss,
        }
    }
}

fn invalid(msg: impl Into<String>) -> HarnessError {
    HarnessError::ConfigInvalid(msg.into())
}

impl RunConfig {
    /// Resolves and validates a config document.
    pub fn from_document(doc: Value) -> Result<Self> {
        let raw: RawRunConfig = serde_json::from_value(doc).map_err(|e| invalid(e.to_string()))?;
        let cfg = raw.resolve();
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `path`, applies overrides, then resolves.
    pub fn load(path: &Path, overrides: &[(String, String)]) -> Result<Self> {
        let mut doc = load_document(path)?;
        apply_overrides(&mut doc, overrides)?;
        Self::from_document(doc)
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(invalid("steps must be at least 1"));
        }
        if self.diag_interval == 0 {
            return Err(invalid("diag_interval must be at least 1"));
        }
        if self.checkpoint_interval == Some(0) {
            return Err(invalid("checkpoint_interval must be at least 1"));
        }
        if self.batch == BatchMode::Minibatch(0) {
            return Err(invalid("minibatch size must be at least 1"));
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0 && c.is_finite()) {
                return Err(invalid(format!("grad_clip must be positive, got {c}")));
            }
        }
        if self.stop_at_loss.is_some_and(|l| l.is_nan()) {
            return Err(invalid("stop_at_loss is NaN"));
        }
        self.hyperparams.validate().map_err(|e| invalid(e.to_string()))?;
        self.schedule.validate().map_err(|e| invalid(e.to_string()))?;
        if self.schedule.total_steps < self.steps {
            return Err(invalid(format!(
                "schedule.total_steps ({}) is shorter than steps ({})",
                self.schedule.total_steps, self.steps
            )));
        }
        self.build_problem()?;
        Ok(())
    }

    pub fn build_problem(&self) -> Result<Box<dyn Problem>> {
        build_problem(&self.problem).map_err(|e| invalid(format!("problem: {e}")))
    }

    pub fn polar(&self) -> PolarMode {
        match self.polar_mode {
            PolarChoice::Exact => PolarMode::Exact,
            PolarChoice::NewtonSchulz => PolarMode::NewtonSchulz(self.hyperparams.ns_steps),
        }
    }

    /// Pretty JSON with a trailing newline. Loading it gives back `self`.
    pub fn to_canonical_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    pub fn to_document(&self) -> Value {
        serde_json::to_value(self).expect("config serializes")
    }
}

/// A learning-rate grid run for each listed optimizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    /// Run config document shared by every cell. `optimizer`, the learning
    /// rate and `output_dir` are set per cell.
    pub base: Value,
    pub lr_grid: Vec<f64>,
    /// Step whose loss is reported in the table.
    pub metric_step: u64,
    #[serde(default = "all_optimizers")]
    pub optimizers: Vec<OptimizerKind>,
}

fn all_optimizers() -> Vec<OptimizerKind> {
    OptimizerKind::ALL.to_vec()
}

impl SweepConfig {
    pub fn from_document(doc: Value) -> Result<Self> {
        let cfg: SweepConfig = serde_json::from_value(doc).map_err(|e| invalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[(String, String)]) -> Result<Self> {
        let mut doc = load_document(path)?;
        apply_overrides(&mut doc, overrides)?;
        Self::from_document(doc)
    }

    pub fn validate(&self) -> Result<()> {
        if self.lr_grid.is_empty() {
            return Err(invalid("lr_grid is empty"));
        }
        if let Some(lr) = self.lr_grid.iter().find(|lr| !(**lr > 0.0 && lr.is_finite())) {
            return Err(invalid(format!("lr_grid entries must be positive, got {lr}")));
        }
        if self.optimizers.is_empty() {
            return Err(invalid("optimizers is empty"));
        }
        let base = self.base_config()?;
        if self.metric_step > base.steps {
            return Err(invalid(format!(
                "metric_step ({}) exceeds steps ({})",
                self.metric_step, base.steps
            )));
        }
        for &kind in &self.optimizers {
            for i in 0..self.lr_grid.len() {
                self.cell_config(kind, i)?;
            }
        }
        Ok(())
    }

    /// The base document resolved as a run. Each cell sets its own optimizer,
    /// so the base may omit it; the first swept optimizer stands in.
    pub fn base_config(&self) -> Result<RunConfig> {
        let mut doc = self.base.clone();
        if doc.get("optimizer").is_none() {
            let first = self.optimizers.first().ok_or_else(|| invalid("optimizers is empty"))?;
            set_path(&mut doc, "optimizer", Value::String(first.as_str().into()))?;
        }
        RunConfig::from_document(doc)
    }

    pub fn base_output_dir(&self) -> Result<PathBuf> {
        Ok(self.base_config()?.output_dir)
    }

    /// Config of cell `(kind, lr_grid[lr_index])`.
    pub fn cell_config(&self, kind: OptimizerKind, lr_index: usize) -> Result<RunConfig> {
        let lr = self.lr_grid[lr_index];
        let root = self.base_output_dir()?;
        let mut doc = self.base.clone();
        set_path(&mut doc, "optimizer", Value::String(kind.as_str().into()))?;
        set_path(&mut doc, "hyperparams.lr", lr.into())?;
        set_path(&mut doc, "schedule.lr_max", lr.into())?;
        let dir = root.join(format!("{kind}_lr{lr_index}"));
        set_path(
            &mut doc,
            "output_dir",
            Value::String(dir.to_string_lossy().into_owned()),
        )?;
        RunConfig::from_document(doc)
    }

    pub fn to_canonical_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("sweep config serializes");
        s.push('\n');
        s
    }
}

/// Parses a TOML or JSON file into a document. `.json` files are read as
/// JSON, anything else as TOML.
pub fn load_document(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    parse_document(&text, path.extension().is_some_and(|e| e == "json"))
}

pub fn parse_document(text: &str, json: bool) -> Result<Value> {
    if json {
        return serde_json::from_str(text).map_err(|e| invalid(format!("JSON: {e}")));
    }
    let table: toml::Table = toml::from_str(text).map_err(|e| invalid(format!("TOML: {e}")))?;
    serde_json::to_value(table).map_err(|e| invalid(e.to_string()))
}

/// Applies `--key value` overrides. Keys are dotted paths; values are parsed
/// as JSON when possible and taken as strings otherwise.
pub fn apply_overrides(doc: &mut Value, overrides: &[(String, String)]) -> Result<()> {
    for (key, raw) in overrides {
        set_path(doc, key, parse_override_value(raw))?;
    }
    Ok(())
}

pub fn parse_override_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

fn set_path(doc: &mut Value, key: &str, value: Value) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(invalid(format!("bad override key '{key}'")));
    }
    let mut node = doc;
    for part in &parts[..parts.len() - 1] {
        if node.is_null() {
            *node = Value::Object(Map::new());
        }
        let obj = node
            .as_object_mut()
            .ok_or_else(|| invalid(format!("override '{key}': '{part}' is not a table")))?;
        node = obj.entry(part.to_string()).or_insert(Value::Null);
    }
    if node.is_null() {
        *node = Value::Object(Map::new());
    }
    let obj = node
        .as_object_mut()
        .ok_or_else(|| invalid(format!("override '{key}' does not address a table")))?;
    obj.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}
