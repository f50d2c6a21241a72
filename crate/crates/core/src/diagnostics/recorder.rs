use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use super::stationarity_phi;
use crate::matcore::{norm_suite, NormSuite};
use crate::optimizers::{ParamBlock, ParamKind, StepArtifacts};

pub const CSV_HEADER: &str = "step,block,eps,alpha,rho,phi,fro_X,spec_X,nuc_X,l1_X,linf_X,rms_D,descent_residual,lr";

/// One row of the run log. Quantities that are undefined for a step (zero
/// signal, no known smoothness constant) are NaN.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub step: u64,
    pub block: String,
    pub eps: f64,
    pub alpha: f64,
    pub rho: f64,
    pub phi: f64,
    pub x_norms: NormSuite,
    pub d_norms: NormSuite,
    pub rms_d: f64,
    pub descent_residual: f64,
    pub lr: f64,
}

/// A step whose descent residual came out positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViolationEvent {
    pub step: u64,
    pub residual: f64,
    pub lr: f64,
}

/// Append-only collector of per-block diagnostics.
#[derive(Debug, Clone, Default)]
pub struct DiagnosticsRecorder {
    interval: u64,
    records: Vec<DiagnosticsRecord>,
    violations: Vec<ViolationEvent>,
}

fn fmt_f(x: f64) -> String {
    format!("{x:.16e}")
}

impl DiagnosticsRecorder {
    /// `interval = 0` disables recording.
    pub fn new(interval: u64) -> Self {
        Self {
            interval,
            ..Self::default()
        }
    }

    pub fn should_record(&self, step: u64) -> bool {
        self.interval > 0 && step.is_multiple_of(self.interval)
    }

    /// Records every matrix-shaped block after a step. `ε`, `α`, `ρ`, `Φ` are
    /// taken on the exact polar factor of the step's signal `G̃`.
    pub fn record_trajectory(
        &mut self,
        step: u64,
        lr: f64,
        blocks: &[ParamBlock],
        artifacts: &[StepArtifacts],
        descent_residual: f64,
    ) {
        if !self.should_record(step) {
            return;
        }
        for (block, art) in blocks.iter().zip(artifacts) {
            if block.kind != ParamKind::MatrixShaped {
                continue;
            }
            let (eps, alpha, rho, phi) = match stationarity_phi(&art.signal) {
                Ok(s) if !art.zero_signal => (s.epsilon, s.alpha, s.rho, s.phi),
                _ => (f64::NAN, f64::NAN, f64::NAN, f64::NAN),
            };
            self.records.push(DiagnosticsRecord {
                step,
                block: block.name.clone(),
                eps,
                alpha,
                rho,
                phi,
                x_norms: norm_suite(&block.matrix),
                d_norms: norm_suite(&art.direction),
                rms_d: art.direction.rms(),
                descent_residual,
                lr,
            });
        }
    }

    /// Logs a descent residual; positive values become violation events.
    pub fn note_descent(&mut self, step: u64, residual: f64, lr: f64) {
        if residual > 0.0 {
            self.violations.push(ViolationEvent { step, residual, lr });
        }
    }

    pub fn records(&self) -> &[DiagnosticsRecord] {
        &self.records
    }

    pub fn violations(&self) -> &[ViolationEvent] {
        &self.violations
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{CSV_HEADER}")?;
        for r in &self.records {
            let n = &r.x_norms;
            let fields = [
                r.eps,
                r.alpha,
                r.rho,
                r.phi,
                n.frobenius,
                n.spectral,
                n.nuclear,
                n.l1,
                n.linf,
                r.rms_d,
                r.descent_residual,
                r.lr,
            ];
            let body: Vec<String> = fields.iter().map(|&x| fmt_f(x)).collect();
            writeln!(w, "{},{},{}", r.step, r.block, body.join(","))?;
        }
        Ok(())
    }
}
