//! The isotropy constant `ε`, the stationarity measure `Φ`, the
//! cancellation-aware bound audit and the per-step descent audit.
//!
//! All quantities are taken from a thin SVD `Z = UΣVᵀ` of rank `r`, with
//! `Q = UVᵀ`, `S = sign(Q)` and diagonal correlations `m_k = u_kᵀ S v_k`.

mod recorder;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matcore::{sign_map, thin_svd, DenseMatrix, DEFAULT_RANK_TOL};

pub use recorder::{DiagnosticsRecord, DiagnosticsRecorder, ViolationEvent, CSV_HEADER};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsotropyReport {
    pub rank: usize,
    /// Diagonal correlations `m_k`.
    pub m_vector: Vec<f64>,
    /// `‖Q‖₁ / r`.
    pub m_bar: f64,
    /// Smallest `ε` with `‖m − m̄𝟏‖₂ ≤ ε‖Q‖₁/√r`.
    pub epsilon: f64,
    pub q_l1: f64,
    /// Smallest retained singular value (1 when built from factors).
    pub smallest_sigma: f64,
}

/// Everything derived from one decomposition.
struct Decomposed {
    sigma: Vec<f64>,
    q: DenseMatrix,
    s: DenseMatrix,
    report: IsotropyReport,
}

fn correlations(u: &DenseMatrix, v: &DenseMatrix, s: &DenseMatrix) -> Vec<f64> {
    let sv = s.matmul(v);
    (0..u.cols())
        .map(|k| (0..u.rows()).map(|i| u.get(i, k) * sv.get(i, k)).sum())
        .collect()
}

fn report_from(u: &DenseMatrix, v: &DenseMatrix, smallest_sigma: f64) -> (DenseMatrix, DenseMatrix, IsotropyReport) {
    let q = u.matmul_t(v);
    let s = sign_map(&q);
    let m = correlations(u, v, &s);
    let r = m.len();
    let q_l1 = q.l1_norm();
    let m_bar = q_l1 / r as f64;
    let dev = m.iter().map(|x| (x - m_bar).powi(2)).sum::<f64>().sqrt();
    let epsilon = dev * (r as f64).sqrt() / q_l1;
    let report = IsotropyReport {
        rank: r,
        m_vector: m,
        m_bar,
        epsilon,
        q_l1,
        smallest_sigma,
    };
    (q, s, report)
}

fn decompose(z: &DenseMatrix, rank_tol: f64) -> Result<Decomposed> {
    let svd = thin_svd(z, rank_tol)?;
    let smallest = *svd.singular_values.last().ok_or(Error::ZeroMatrix)?;
    let (q, s, report) = report_from(&svd.u, &svd.v, smallest);
    Ok(Decomposed {
        sigma: svd.singular_values,
        q,
        s,
        report,
    })
}

/// Tight isotropy constant of `Z`.
pub fn isotropy_epsilon(z: &DenseMatrix, rank_tol: f64) -> Result<IsotropyReport> {
    Ok(decompose(z, rank_tol)?.report)
}

/// Isotropy report for `Q = UVᵀ` with known orthonormal factors (no SVD).
pub fn isotropy_from_factors(u: &DenseMatrix, v: &DenseMatrix) -> Result<IsotropyReport> {
    if u.cols() != v.cols() || u.cols() == 0 {
        return Err(Error::InvalidRank {
            rank: u.cols(),
            d1: u.rows(),
            d2: v.rows(),
        });
    }
    Ok(report_from(u, v, 1.0).2)
}

/// `α = mean(σ)` and `‖σ − α𝟏‖₂`.
fn spectrum_center(sigma: &[f64]) -> (f64, f64) {
    let alpha = sigma.iter().sum::<f64>() / sigma.len() as f64;
    let dev = sigma.iter().map(|x| (x - alpha).powi(2)).sum::<f64>().sqrt();
    (alpha, dev)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LemmaAudit {
    /// `|⟨Z − αQ, S⟩|`.
    pub lhs: f64,
    /// `ε‖Q‖₁/√r · ‖Σ − αI‖_F`.
    pub rhs: f64,
    /// `‖Z − αQ‖_F · ‖S‖_F`.
    pub cs_rhs: f64,
    /// `|⟨Z − αQ, S⟩ − ⟨σ − α𝟏, m − m̄𝟏⟩|`.
    pub identity_residual: f64,
    pub alpha: f64,
    pub epsilon: f64,
}

pub fn lemma43_audit(z: &DenseMatrix) -> Result<LemmaAudit> {
    let d = decompose(z, DEFAULT_RANK_TOL)?;
    let rep = &d.report;
    let (alpha, sigma_dev) = spectrum_center(&d.sigma);
    let resid = z - &d.q.scaled(alpha);
    let inner = resid.dot(&d.s);
    let spectral_form: f64 = d
        .sigma
        .iter()
        .zip(&rep.m_vector)
        .map(|(s, m)| (s - alpha) * (m - rep.m_bar))
        .sum();
    let r = rep.rank as f64;
    Ok(LemmaAudit {
        lhs: inner.abs(),
        rhs: rep.epsilon * rep.q_l1 / r.sqrt() * sigma_dev,
        cs_rhs: resid.frobenius_norm() * d.s.frobenius_norm(),
        identity_residual: (inner - spectral_form).abs(),
        alpha,
        epsilon: rep.epsilon,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stationarity {
    /// `tr(Σ)/r`.
    pub alpha: f64,
    /// `‖Σ − αI‖_F / (α√r)`.
    pub rho: f64,
    /// `‖Q‖₁ α (1 − ερ)`.
    pub phi: f64,
    pub epsilon: f64,
}

pub fn stationarity_phi(z: &DenseMatrix) -> Result<Stationarity> {
    let d = decompose(z, DEFAULT_RANK_TOL)?;
    let (alpha, sigma_dev) = spectrum_center(&d.sigma);
    let rho = sigma_dev / (alpha * (d.report.rank as f64).sqrt());
    let eps = d.report.epsilon;
    Ok(Stationarity {
        alpha,
        rho,
        phi: d.report.q_l1 * alpha * (1.0 - eps * rho),
        epsilon: eps,
    })
}

/// `f_after − (f_before − η·Φ + ½·L·η²·d1·d2)`. Non-positive certifies the step.
pub fn descent_audit(f_before: f64, f_after: f64, eta: f64, phi: f64, l: f64, d1: usize, d2: usize) -> f64 {
    f_after - (f_before - eta * phi + 0.5 * l * eta * eta * (d1 * d2) as f64)
}
