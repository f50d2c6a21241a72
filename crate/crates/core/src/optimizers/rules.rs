use serde::{Deserialize, Serialize};

use super::{BlockState, HyperParams, ParamBlock, ParamKind};
use crate::error::{Error, Result};
use crate::geometry::{project_a, PolarMode};
use crate::matcore::{sign_map, DenseMatrix, ZERO_FLOOR};

/// Betas of the AdamW fallback for vector-shaped blocks. The block's own
/// `hp.beta1/beta2` are tuned for the matrix rule and are not reused.
pub const FALLBACK_BETA1: f64 = 0.9;
pub const FALLBACK_BETA2: f64 = 0.95;

/// Intermediate quantities of one step on one block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepArtifacts {
    /// The mixed signal `G̃` (AdamW: the first moment).
    pub signal: DenseMatrix,
    /// `Q`, for the orthogonalizing rules and Lion (where `Q = G̃`).
    pub orthogonalized: Option<DenseMatrix>,
    /// `S = sign(Q)` for the sign rules.
    pub sign: Option<DenseMatrix>,
    /// The applied direction `D`; the step is `X ← X − ηD − ληX`.
    pub direction: DenseMatrix,
    /// RMS alignment factor (1 for signSGD and AdamW).
    pub gamma: f64,
    /// The signal was exactly zero and no direction was taken.
    pub zero_signal: bool,
}

/// `γ = rms_target·√(d1·d2)/‖A‖_F`, or `None` for a zero matrix.
pub fn rms_alignment(a: &DenseMatrix, rms_target: f64) -> Option<f64> {
    let fro = a.frobenius_norm();
    if fro <= ZERO_FLOOR {
        return None;
    }
    Some(rms_target * ((a.len() as f64).sqrt() / fro))
}

fn check_inputs(block: &ParamBlock, grad: &DenseMatrix, want: ParamKind) -> Result<()> {
    grad.check_shape(block.shape())?;
    if block.kind != want {
        return Err(Error::InvalidParam(format!(
            "block '{}' has kind {:?}, this rule takes {:?}",
            block.name, block.kind, want
        )));
    }
    if !grad.is_finite() {
        return Err(Error::InvalidParam(format!(
            "non-finite gradient for block '{}'",
            block.name
        )));
    }
    Ok(())
}

/// `M ← β2·M + (1−β2)·g`, then `G̃ = (1−β1)·g + β1·M`.
fn double_momentum(state: &mut BlockState, grad: &DenseMatrix, hp: &HyperParams) -> DenseMatrix {
    let (b1, b2) = (hp.beta1, hp.beta2);
    state
        .momentum
        .as_mut_slice()
        .iter_mut()
        .zip(grad.as_slice())
        .for_each(|(m, &g)| *m = b2 * *m + (1.0 - b2) * g);
    grad.zip_map(&state.momentum, |g, m| (1.0 - b1) * g + b1 * m)
}

/// `X ← X − η·D − λη·X`, with the decay term read from the pre-update `X`.
fn apply_update(x: &mut DenseMatrix, d: &DenseMatrix, eta: f64, weight_decay: f64) {
    let decay = weight_decay * eta;
    x.as_mut_slice()
        .iter_mut()
        .zip(d.as_slice())
        .for_each(|(xi, &di)| *xi = *xi - eta * di - decay * *xi);
}

fn zero_step(block: &mut ParamBlock, signal: DenseMatrix, eta: f64, wd: f64) -> StepArtifacts {
    let direction = DenseMatrix::zeros(block.matrix.rows(), block.matrix.cols());
    apply_update(&mut block.matrix, &direction, eta, wd);
    StepArtifacts {
        signal,
        orthogonalized: None,
        sign: None,
        direction,
        gamma: 0.0,
        zero_signal: true,
    }
}

/// Shared tail of OLion and Lion: sign of `Q`, RMS alignment, update.
fn sign_tail(block: &mut ParamBlock, signal: DenseMatrix, q: DenseMatrix, hp: &HyperParams, eta: f64) -> StepArtifacts {
    let s = sign_map(&q);
    let Some(gamma) = rms_alignment(&s, hp.rms_target) else {
        return zero_step(block, signal, eta, hp.weight_decay);
    };
    let direction = s.scaled(gamma);
    apply_update(&mut block.matrix, &direction, eta, hp.weight_decay);
    StepArtifacts {
        signal,
        orthogonalized: Some(q),
        sign: Some(s),
        direction,
        gamma,
        zero_signal: false,
    }
}

/// One OLion step: double momentum, orthogonalize, sign, RMS-align, decay.
pub fn olion_step(
    block: &mut ParamBlock,
    grad: &DenseMatrix,
    state: &mut BlockState,
    hp: &HyperParams,
    polar: PolarMode,
    eta: f64,
) -> Result<StepArtifacts> {
    check_inputs(block, grad, ParamKind::MatrixShaped)?;
    let signal = double_momentum(state, grad, hp);
    state.step_count += 1;
    if signal.linf_norm() <= ZERO_FLOOR {
        return Ok(zero_step(block, signal, eta, hp.weight_decay));
    }
    let q = project_a(&signal, polar)?;
    Ok(sign_tail(block, signal, q, hp, eta))
}

/// Lion in the same double-momentum form, with `Q = G̃`.
pub fn lion_step(
    block: &mut ParamBlock,
    grad: &DenseMatrix,
    state: &mut BlockState,
    hp: &HyperParams,
    eta: f64,
) -> Result<StepArtifacts> {
    check_inputs(block, grad, ParamKind::MatrixShaped)?;
    let signal = double_momentum(state, grad, hp);
    state.step_count += 1;
    let q = signal.clone();
    Ok(sign_tail(block, signal, q, hp, eta))
}

/// Muon: `D = γ·Q`, with `γ` aligning the RMS of `Q` to the target.
pub fn muon_step(
    block: &mut ParamBlock,
    grad: &DenseMatrix,
    state: &mut BlockState,
    hp: &HyperParams,
    polar: PolarMode,
    eta: f64,
) -> Result<StepArtifacts> {
    check_inputs(block, grad, ParamKind::MatrixShaped)?;
    let signal = double_momentum(state, grad, hp);
    state.step_count += 1;
    if signal.linf_norm() <= ZERO_FLOOR {
        return Ok(zero_step(block, signal, eta, hp.weight_decay));
    }
    let q = project_a(&signal, polar)?;
    let Some(gamma) = rms_alignment(&q, hp.rms_target) else {
        return Ok(zero_step(block, signal, eta, hp.weight_decay));
    };
    let direction = q.scaled(gamma);
    apply_update(&mut block.matrix, &direction, eta, hp.weight_decay);
    Ok(StepArtifacts {
        signal,
        orthogonalized: Some(q),
        sign: None,
        direction,
        gamma,
        zero_signal: false,
    })
}

/// `X ← X − η·sign(g) − λη·X`. The state only counts steps.
pub fn signsgd_step(
    block: &mut ParamBlock,
    grad: &DenseMatrix,
    state: &mut BlockState,
    hp: &HyperParams,
    eta: f64,
) -> Result<StepArtifacts> {
    check_inputs(block, grad, ParamKind::MatrixShaped)?;
    state.step_count += 1;
    let s = sign_map(grad);
    apply_update(&mut block.matrix, &s, eta, hp.weight_decay);
    Ok(StepArtifacts {
        signal: grad.clone(),
        orthogonalized: None,
        zero_signal: s.is_zero(),
        direction: s.clone(),
        sign: Some(s),
        gamma: 1.0,
    })
}

fn adamw_core(
    block: &mut ParamBlock,
    grad: &DenseMatrix,
    state: &mut BlockState,
    (b1, b2, eps, wd): (f64, f64, f64, f64),
    eta: f64,
) -> StepArtifacts {
    let v = state
        .second_moment
        .get_or_insert_with(|| DenseMatrix::zeros(grad.rows(), grad.cols()));
    let m = &mut state.momentum;
    for ((mi, vi), &g) in m.as_mut_slice().iter_mut().zip(v.as_mut_slice()).zip(grad.as_slice()) {
        *mi = b1 * *mi + (1.0 - b1) * g;
        *vi = b2 * *vi + (1.0 - b2) * g * g;
    }
    state.step_count += 1;
    let t = state.step_count as i32;
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let direction = m.zip_map(v, |mi, vi| (mi / c1) / ((vi / c2).sqrt() + eps));
    apply_update(&mut block.matrix, &direction, eta, wd);
    StepArtifacts {
        signal: m.clone(),
        orthogonalized: None,
        sign: None,
        zero_signal: direction.is_zero(),
        direction,
        gamma: 1.0,
    }
}

/// AdamW with bias correction and decoupled weight decay.
pub fn adamw_step(
    block: &mut ParamBlock,
    grad: &DenseMatrix,
    state: &mut BlockState,
    hp: &HyperParams,
    eta: f64,
) -> Result<StepArtifacts> {
    check_inputs(block, grad, ParamKind::MatrixShaped)?;
    let p = (hp.beta1, hp.beta2, hp.adam_eps, hp.weight_decay);
    Ok(adamw_core(block, grad, state, p, eta))
}

/// AdamW for vector-shaped blocks, with [`FALLBACK_BETA1`]/[`FALLBACK_BETA2`].
pub fn fallback_step_1d(
    block: &mut ParamBlock,
    grad: &DenseMatrix,
    state: &mut BlockState,
    hp: &HyperParams,
    eta: f64,
) -> Result<StepArtifacts> {
    check_inputs(block, grad, ParamKind::Fallback1d)?;
    let p = (FALLBACK_BETA1, FALLBACK_BETA2, hp.adam_eps, hp.weight_decay);
    Ok(adamw_core(block, grad, state, p, eta))
}
