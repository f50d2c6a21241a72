//! Step rules for OLion and its baselines over collections of parameter blocks.
//!
//! Every rule is written per block: it receives one [`ParamBlock`], its
//! gradient, and the block's own [`BlockState`]. [`Optimizer`] routes
//! matrix-shaped blocks to the selected rule and vector-shaped
//! (`Fallback1d`) blocks to AdamW.

mod rules;
mod schedule;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::PolarMode;
use crate::matcore::DenseMatrix;

pub use rules::{
    adamw_step, fallback_step_1d, lion_step, muon_step, olion_step, rms_alignment, signsgd_step, StepArtifacts,
    FALLBACK_BETA1, FALLBACK_BETA2,
};
pub use schedule::{schedule_lr, LrSchedule, ScheduleKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    #[serde(rename = "olion")]
    OLion,
    Lion,
    Muon,
    #[serde(rename = "signsgd")]
    SignSgd,
    #[serde(rename = "adamw")]
    AdamW,
}

impl OptimizerKind {
    pub const ALL: [OptimizerKind; 5] = [
        OptimizerKind::OLion,
        OptimizerKind::Lion,
        OptimizerKind::Muon,
        OptimizerKind::SignSgd,
        OptimizerKind::AdamW,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::OLion => "olion",
            Self::Lion => "lion",
            Self::Muon => "muon",
            Self::SignSgd => "signsgd",
            Self::AdamW => "adamw",
        }
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidParam(format!("unknown optimizer '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind {
    MatrixShaped,
    /// Vectors (biases, gains). Routed to the AdamW fallback.
    Fallback1d,
}

/// One trainable matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamBlock {
    pub name: String,
    pub matrix: DenseMatrix,
    pub kind: ParamKind,
}

impl ParamBlock {
    pub fn new(name: impl Into<String>, matrix: DenseMatrix, kind: ParamKind) -> Result<Self> {
        if kind == ParamKind::Fallback1d && matrix.rows() != 1 && matrix.cols() != 1 {
            return Err(Error::InvalidDim(format!(
                "fallback_1d block must be a row or column vector, got {}x{}",
                matrix.rows(),
                matrix.cols()
            )));
        }
        Ok(Self {
            name: name.into(),
            matrix,
            kind,
        })
    }

    pub fn matrix(name: impl Into<String>, matrix: DenseMatrix) -> Self {
        Self {
            name: name.into(),
            matrix,
            kind: ParamKind::MatrixShaped,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        self.matrix.shape()
    }
}

/// Optimizer hyperparameters. Which fields are read depends on the rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub weight_decay: f64,
    pub ns_steps: usize,
    /// Target RMS of the update for the sign and orthogonalized rules.
    pub rms_target: f64,
    pub adam_eps: f64,
}

impl HyperParams {
    /// Defaults for each rule. OLion uses a slow `β2` buffer and a fast `β1` mix;
    /// Muon mixes with a single `β` for both.
    pub fn defaults_for(kind: OptimizerKind) -> Self {
        let base = Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.95,
            weight_decay: 0.1,
            ns_steps: 5,
            rms_target: 0.2,
            adam_eps: 1e-8,
        };
        match kind {
            OptimizerKind::OLion => Self {
                beta1: 0.95,
                beta2: 0.98,
                ..base
            },
            OptimizerKind::Lion => Self {
                beta1: 0.9,
                beta2: 0.99,
                ..base
            },
            OptimizerKind::Muon => Self {
                beta1: 0.95,
                beta2: 0.95,
                ..base
            },
            OptimizerKind::SignSgd | OptimizerKind::AdamW => base,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidParam(what.to_string()));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) {
            return bad("beta1 must lie in [0, 1)");
        }
        if !(0.0..1.0).contains(&self.beta2) {
            return bad("beta2 must lie in [0, 1)");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight_decay must be non-negative");
        }
        if !(self.rms_target > 0.0 && self.rms_target.is_finite()) {
            return bad("rms_target must be positive");
        }
        if !(self.adam_eps > 0.0 && self.adam_eps.is_finite()) {
            return bad("adam_eps must be positive");
        }
        Ok(())
    }
}

/// Per-block optimizer state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockState {
    /// First moment / momentum buffer, zero-initialized.
    pub momentum: DenseMatrix,
    /// AdamW second moment. Present only for blocks stepped by AdamW.
    pub second_moment: Option<DenseMatrix>,
    pub step_count: u64,
}

impl BlockState {
    pub fn zeros(shape: (usize, usize)) -> Self {
        Self {
            momentum: DenseMatrix::zeros(shape.0, shape.1),
            second_moment: None,
            step_count: 0,
        }
    }

    pub fn zeros_with_second_moment(shape: (usize, usize)) -> Self {
        Self {
            second_moment: Some(DenseMatrix::zeros(shape.0, shape.1)),
            ..Self::zeros(shape)
        }
    }
}

/// A configured optimizer holding one [`BlockState`] per parameter block.
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    hp: HyperParams,
    polar: PolarMode,
    states: Vec<BlockState>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, hp: HyperParams, polar: PolarMode, blocks: &[ParamBlock]) -> Result<Self> {
        hp.validate()?;
        let states = blocks
            .iter()
            .map(|b| {
                if b.kind == ParamKind::Fallback1d || kind == OptimizerKind::AdamW {
                    BlockState::zeros_with_second_moment(b.shape())
                } else {
                    BlockState::zeros(b.shape())
                }
            })
            .collect();
        Ok(Self {
            kind,
            hp,
            polar,
            states,
        })
    }

    /// Rebuilds an optimizer from saved states (checkpoint resume).
    pub fn from_states(
        kind: OptimizerKind,
        hp: HyperParams,
        polar: PolarMode,
        states: Vec<BlockState>,
    ) -> Result<Self> {
        hp.validate()?;
        Ok(Self {
            kind,
            hp,
            polar,
            states,
        })
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn hyperparams(&self) -> &HyperParams {
        &self.hp
    }

    pub fn polar_mode(&self) -> PolarMode {
        self.polar
    }

    pub fn states(&self) -> &[BlockState] {
        &self.states
    }

    /// Applies one step with learning rate `eta` to every block.
    pub fn step(&mut self, blocks: &mut [ParamBlock], grads: &[DenseMatrix], eta: f64) -> Result<Vec<StepArtifacts>> {
        if blocks.len() != self.states.len() || grads.len() != blocks.len() {
            return Err(Error::InvalidParam(format!(
                "optimizer tracks {} blocks, got {} blocks and {} gradients",
                self.states.len(),
                blocks.len(),
                grads.len()
            )));
        }
        let (kind, hp, polar) = (self.kind, &self.hp, self.polar);
        blocks
            .iter_mut()
            .zip(grads)
            .zip(self.states.iter_mut())
            .map(|((block, grad), state)| {
                if block.kind == ParamKind::Fallback1d {
                    return fallback_step_1d(block, grad, state, hp, eta);
                }
                match kind {
                    OptimizerKind::OLion => olion_step(block, grad, state, hp, polar, eta),
                    OptimizerKind::Lion => lion_step(block, grad, state, hp, eta),
                    OptimizerKind::Muon => muon_step(block, grad, state, hp, polar, eta),
                    OptimizerKind::SignSgd => signsgd_step(block, grad, state, hp, eta),
                    OptimizerKind::AdamW => adamw_step(block, grad, state, hp, eta),
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kind_round_trips_through_strings() {
        for k in OptimizerKind::ALL {
            assert_eq!(k.as_str().parse::<OptimizerKind>().unwrap(), k);
        }
        assert!("sgd".parse::<OptimizerKind>().is_err());
    }

    #[test]
    fn defaults_follow_reference_settings() {
        let o = HyperParams::defaults_for(OptimizerKind::OLion);
        assert_eq!((o.beta1, o.beta2, o.ns_steps), (0.95, 0.98, 5));
        assert_eq!(o.rms_target, 0.2);
        let m = HyperParams::defaults_for(OptimizerKind::Muon);
        assert_eq!((m.beta1, m.beta2), (0.95, 0.95));
        let a = HyperParams::defaults_for(OptimizerKind::AdamW);
        assert_eq!((a.beta1, a.beta2, a.adam_eps, a.weight_decay), (0.9, 0.95, 1e-8, 0.1));
    }

    #[test]
    fn validation_rejects_out_of_range() {
        let mut hp = HyperParams::defaults_for(OptimizerKind::OLion);
        hp.beta2 = 1.0;
        assert!(hp.validate().is_err());
        hp.beta2 = 0.5;
        hp.lr = 0.0;
        assert!(hp.validate().is_err());
    }

    #[test]
    fn fallback_block_must_be_vector() {
        assert!(ParamBlock::new("b", DenseMatrix::zeros(2, 2), ParamKind::Fallback1d).is_err());
        assert!(ParamBlock::new("b", DenseMatrix::zeros(1, 5), ParamKind::Fallback1d).is_ok());
    }

    #[test]
    fn optimizer_routes_vectors_to_adamw() {
        let mut blocks = vec![
            ParamBlock::matrix("w", DenseMatrix::filled(3, 2, 1.0)),
            ParamBlock::new("b", DenseMatrix::filled(1, 3, 1.0), ParamKind::Fallback1d).unwrap(),
        ];
        let hp = HyperParams::defaults_for(OptimizerKind::OLion);
        let mut opt = Optimizer::new(OptimizerKind::OLion, hp, PolarMode::NewtonSchulz(5), &blocks).unwrap();
        assert!(opt.states()[0].second_moment.is_none());
        assert!(opt.states()[1].second_moment.is_some());
        let grads = vec![DenseMatrix::filled(3, 2, 0.5), DenseMatrix::filled(1, 3, 0.5)];
        let arts = opt.step(&mut blocks, &grads, 0.01).unwrap();
        assert!(arts[0].sign.is_some());
        assert!(arts[1].sign.is_none());
        assert!(opt.states().iter().all(|s| s.step_count == 1));
    }
}
