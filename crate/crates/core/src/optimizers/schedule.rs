use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    Constant,
    WarmupCosine,
    WarmupLinear,
}

/// Learning-rate schedule. Every kind starts with a linear warmup of
/// `warmup_steps` (possibly zero); `Constant` then holds `lr_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub kind: ScheduleKind,
    pub warmup_steps: u64,
    pub total_steps: u64,
    pub lr_max: f64,
    pub lr_min: f64,
}

impl LrSchedule {
    pub fn constant(lr: f64, total_steps: u64) -> Self {
        Self {
            kind: ScheduleKind::Constant,
            warmup_steps: 0,
            total_steps,
            lr_max: lr,
            lr_min: lr,
        }
    }

    pub fn warmup_cosine(warmup_steps: u64, total_steps: u64, lr_max: f64, lr_min: f64) -> Self {
        Self {
            kind: ScheduleKind::WarmupCosine,
            warmup_steps,
            total_steps,
            lr_max,
            lr_min,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.total_steps == 0 || self.warmup_steps > self.total_steps {
            return Err(Error::InvalidParam(format!(
                "schedule needs 0 <= warmup_steps ({}) <= total_steps ({}) and total_steps > 0",
                self.warmup_steps, self.total_steps
            )));
        }
        if !(self.lr_max > 0.0 && self.lr_max.is_finite()) {
            return Err(Error::InvalidParam("lr_max must be positive".into()));
        }
        if !(self.lr_min >= 0.0 && self.lr_min <= self.lr_max) {
            return Err(Error::InvalidParam("lr_min must satisfy 0 <= lr_min <= lr_max".into()));
        }
        Ok(())
    }

    pub fn at(&self, t: u64) -> Result<f64> {
        schedule_lr(self, t)
    }
}

/// Learning rate at step `t` (0-based).
///
/// Warmup gives `lr_max·(t+1)/warmup_steps`, so step 0 already moves and the
/// last warmup step reaches `lr_max`. Decay runs from `lr_max` at
/// `t = warmup_steps` to `lr_min` at `t = total_steps − 1`.
pub fn schedule_lr(s: &LrSchedule, t: u64) -> Result<f64> {
    s.validate()?;
    if t >= s.total_steps {
        return Err(Error::OutOfRange {
            step: t,
            total: s.total_steps,
        });
    }
    if t < s.warmup_steps {
        return Ok(s.lr_max * (t + 1) as f64 / s.warmup_steps as f64);
    }
    let span = (s.total_steps - 1).saturating_sub(s.warmup_steps).max(1) as f64;
    let p = ((t - s.warmup_steps) as f64 / span).min(1.0);
    let lr = match s.kind {
        ScheduleKind::Constant => s.lr_max,
        ScheduleKind::WarmupCosine => s.lr_min + 0.5 * (s.lr_max - s.lr_min) * (1.0 + (PI * p).cos()),
        ScheduleKind::WarmupLinear => s.lr_max + (s.lr_min - s.lr_max) * p,
    };
    Ok(lr)
}
