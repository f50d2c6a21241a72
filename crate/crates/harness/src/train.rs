//! The training loop behind `run` and `resume`.

use std::path::{Path, PathBuf};

use olion_core::diagnostics::{descent_audit, stationarity_phi, DiagnosticsRecorder, CSV_HEADER};
use olion_core::matcore::DenseMatrix;
use olion_core::optimizers::{schedule_lr, Optimizer, OptimizerKind, ParamBlock};
use olion_core::problems::{validate_params, Problem};
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::config::{apply_overrides, BatchMode, RunConfig};
use crate::error::{HarnessError, Result};
use crate::output::{continue_csv, fmt_f64, write_file, write_json};

pub const LOSS_CSV: &str = "loss.csv";
pub const DIAGNOSTICS_CSV: &str = "diagnostics.csv";
pub const SUMMARY_JSON: &str = "summary.json";
pub const CONFIG_JSON: &str = "config.json";
pub const CHECKPOINT_DIR: &str = "checkpoints";
pub const LOSS_HEADER: &str = "step,loss,lr,grad_norm";

/// One row of `loss.csv`: the loss and gradient norm at the parameters
/// before step `step` is applied, and that step's learning rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRow {
    pub step: u64,
    pub loss: f64,
    pub lr: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    /// Stopped early at `stop_at_loss`.
    ReachedTarget,
    NonFiniteLoss,
}

/// Contents of `summary.json`. Paths are relative to the run directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryFile {
    pub status: RunStatus,
    pub problem: String,
    pub optimizer: OptimizerKind,
    pub start_step: u64,
    pub steps_completed: u64,
    /// `None` when the run aborted on a non-finite loss.
    pub final_loss: Option<f64>,
    pub failed_step: Option<u64>,
    pub descent_violations: usize,
    pub loss_csv: String,
    pub diagnostics_csv: String,
    pub checkpoints: Vec<String>,
}

/// Result of a completed run or resume.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub final_loss: f64,
    /// Rows produced by this invocation (a resume only reports its own steps).
    pub loss_curve: Vec<LossRow>,
    pub loss_csv_path: PathBuf,
    pub diagnostics_csv_path: PathBuf,
    pub checkpoint_paths: Vec<PathBuf>,
    pub steps_completed: u64,
    pub descent_violations: usize,
    pub status: RunStatus,
    pub final_blocks: Vec<ParamBlock>,
}

struct TrainState {
    step: u64,
    blocks: Vec<ParamBlock>,
    optimizer: Optimizer,
}

/// Runs `config.steps` steps from the problem's seeded initialization.
pub fn run(config: &RunConfig) -> Result<RunSummary> {
    config.validate()?;
    let problem = config.build_problem()?;
    let blocks = problem.init(config.seed);
    let optimizer = Optimizer::new(config.optimizer, config.hyperparams, config.polar(), &blocks)?;
    let state = TrainState {
        step: 0,
        blocks,
        optimizer,
    };
    train(config, problem.as_ref(), state)
}

/// Continues the run saved at `checkpoint` for `remaining_steps` more steps,
/// writing into the checkpoint's run directory.
pub fn resume(checkpoint: &Path, remaining_steps: u64) -> Result<RunSummary> {
    resume_with(checkpoint, remaining_steps, &[])
}

/// Like [`resume`], with `--key value` overrides applied to the saved config.
/// The problem and optimizer must match the checkpoint.
pub fn resume_with(checkpoint: &Path, remaining_steps: u64, overrides: &[(String, String)]) -> Result<RunSummary> {
    let ckpt = Checkpoint::load(checkpoint)?;
    if remaining_steps == 0 {
        return Err(HarnessError::ConfigInvalid("resume needs at least 1 step".into()));
    }
    let mut doc = ckpt.config.to_document();
    apply_overrides(&mut doc, overrides)?;
    doc["steps"] = (ckpt.step + remaining_steps).into();
    let config = RunConfig::from_document(doc)?;
    if config.problem != ckpt.config.problem {
        return Err(HarnessError::ConfigInvalid(format!(
            "checkpoint was written for problem '{}', config asks for '{}'",
            ckpt.config.problem.name(),
            config.problem.name()
        )));
    }
    if config.optimizer != ckpt.config.optimizer {
        return Err(HarnessError::ConfigInvalid(format!(
            "checkpoint holds {} state, config asks for {}",
            ckpt.config.optimizer, config.optimizer
        )));
    }
    let problem = config.build_problem()?;
    validate_params(problem.as_ref(), &ckpt.blocks).map_err(|e| HarnessError::ConfigInvalid(e.to_string()))?;
    if ckpt.states.len() != ckpt.blocks.len() {
        return Err(HarnessError::CorruptCheckpoint(
            "state count does not match blocks".into(),
        ));
    }
    let optimizer = Optimizer::from_states(config.optimizer, config.hyperparams, config.polar(), ckpt.states)?;
    let state = TrainState {
        step: ckpt.step,
        blocks: ckpt.blocks,
        optimizer,
    };
    train(&config, problem.as_ref(), state)
}

fn global_norm(grads: &[DenseMatrix]) -> f64 {
    grads.iter().map(DenseMatrix::sum_sq).sum::<f64>().sqrt()
}

fn train(config: &RunConfig, problem: &dyn Problem, mut state: TrainState) -> Result<RunSummary> {
    let out = &config.output_dir;
    let start = state.step;
    write_file(&out.join(CONFIG_JSON), config.to_canonical_json())?;

    let mut recorder = DiagnosticsRecorder::new(config.diag_interval);
    let mut curve = Vec::with_capacity((config.steps - start) as usize);
    let mut checkpoints = Vec::new();
    let mut saved_at = None;
    let smoothness = problem.smoothness();
    let audit_descent = config.optimizer == OptimizerKind::OLion && state.blocks.len() == 1;

    let mut failure = None;
    let mut reached_target = false;
    for t in start..config.steps {
        let lr = schedule_lr(&config.schedule, t)?;
        let (loss, mut grads) = match config.batch {
            BatchMode::Full => problem.loss_and_grad(&state.blocks),
            BatchMode::Minibatch(bs) => (
                problem.loss(&state.blocks),
                problem.minibatch_grad(&state.blocks, bs, config.seed, t),
            ),
        };
        let grad_norm = global_norm(&grads);
        curve.push(LossRow {
            step: t,
            loss,
            lr,
            grad_norm,
        });
        if !loss.is_finite() || !grad_norm.is_finite() {
            failure = Some((t, loss));
            break;
        }
        if config.stop_at_loss.is_some_and(|target| loss <= target) {
            reached_target = true;
            break;
        }
        if let Some(clip) = config.grad_clip {
            if grad_norm > clip {
                grads.iter_mut().for_each(|g| g.scale_inplace(clip / grad_norm));
            }
        }

        let recording = recorder.should_record(t);
        let phi = match (recording && audit_descent, smoothness) {
            (true, Some(_)) => stationarity_phi(&grads[0]).ok().map(|s| s.phi),
            _ => None,
        };
        let artifacts = state.optimizer.step(&mut state.blocks, &grads, lr)?;
        state.step = t + 1;

        let residual = match (phi, smoothness) {
            (Some(phi), Some(l)) => {
                let (d1, d2) = state.blocks[0].shape();
                let r = descent_audit(
                    loss,
                    problem.loss(&state.blocks),
                    lr * artifacts[0].gamma,
                    phi,
                    l,
                    d1,
                    d2,
                );
                recorder.note_descent(t, r, lr);
                r
            }
            _ => f64::NAN,
        };
        recorder.record_trajectory(t, lr, &state.blocks, &artifacts, residual);

        if config
            .checkpoint_interval
            .is_some_and(|ci| state.step.is_multiple_of(ci))
        {
            checkpoints.push(save_checkpoint(config, &state)?);
            saved_at = Some(state.step);
        }
    }

    let final_loss = match failure {
        Some(_) => f64::NAN,
        None => problem.loss(&state.blocks),
    };
    if failure.is_none() && !final_loss.is_finite() {
        failure = Some((config.steps, final_loss));
    }
    if failure.is_none() && config.checkpoint_interval.is_some() && saved_at != Some(state.step) {
        checkpoints.push(save_checkpoint(config, &state)?);
    }

    let loss_path = out.join(LOSS_CSV);
    let rows: String = curve
        .iter()
        .map(|r| {
            format!(
                "{},{},{},{}\n",
                r.step,
                fmt_f64(r.loss),
                fmt_f64(r.lr),
                fmt_f64(r.grad_norm)
            )
        })
        .collect();
    continue_csv(&loss_path, LOSS_HEADER, start, &rows)?;

    let diag_path = out.join(DIAGNOSTICS_CSV);
    let mut diag = Vec::new();
    recorder
        .write_csv(&mut diag)
        .map_err(|e| HarnessError::io(&diag_path, e))?;
    let diag = String::from_utf8(diag).expect("recorder writes UTF-8");
    let diag_rows = diag.split_once('\n').map_or("", |(_, rest)| rest);
    continue_csv(&diag_path, CSV_HEADER, start, diag_rows)?;

    let relative = |p: &Path| p.strip_prefix(out).unwrap_or(p).to_string_lossy().into_owned();
    let summary = SummaryFile {
        status: match (failure, reached_target) {
            (Some(_), _) => RunStatus::NonFiniteLoss,
            (None, true) => RunStatus::ReachedTarget,
            (None, false) => RunStatus::Completed,
        },
        problem: problem.name().to_string(),
        optimizer: config.optimizer,
        start_step: start,
        steps_completed: state.step,
        final_loss: failure.is_none().then_some(final_loss),
        failed_step: failure.map(|f| f.0),
        descent_violations: recorder.violations().len(),
        loss_csv: LOSS_CSV.into(),
        diagnostics_csv: DIAGNOSTICS_CSV.into(),
        checkpoints: checkpoints.iter().map(|p| relative(p)).collect(),
    };
    write_json(&out.join(SUMMARY_JSON), &summary)?;

    if let Some((step, loss)) = failure {
        return Err(HarnessError::NonFiniteLoss { step, loss });
    }
    Ok(RunSummary {
        final_loss,
        loss_curve: curve,
        loss_csv_path: loss_path,
        diagnostics_csv_path: diag_path,
        checkpoint_paths: checkpoints,
        steps_completed: state.step,
        descent_violations: summary.descent_violations,
        status: summary.status,
        final_blocks: state.blocks,
    })
}

fn save_checkpoint(config: &RunConfig, state: &TrainState) -> Result<PathBuf> {
    let ckpt = Checkpoint {
        step: state.step,
        config: config.clone(),
        blocks: state.blocks.clone(),
        states: state.optimizer.states().to_vec(),
    };
    ckpt.save(&config.output_dir.join(CHECKPOINT_DIR))
}
