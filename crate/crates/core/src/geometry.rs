//! The two constraint sets and the composed sign-after-orthogonalization
//! direction.
//!
//! `𝒜` is the set of column-orthonormal `d1×d2` matrices and `ℬ` the set of
//! matrices with entries `±1/√d1`. The linear score `⟨X, Z⟩` is maximized over
//! `𝒜` by the polar factor of `Z` and over `ℬ` by `sign(Z)/√d1`. Their
//! intersection, when non-empty, is the set of scaled partial Hadamard
//! matrices.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matcore::{newton_schulz, polar_factor_exact, sign_map, DenseMatrix, ZERO_FLOOR};

/// How the projection onto `𝒜` is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "steps")]
pub enum PolarMode {
    /// Polar factor from the thin SVD.
    Exact,
    /// `K` Newton–Schulz steps.
    NewtonSchulz(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConstraintSetTag {
    /// Column-orthonormal matrices.
    SpectralSetA,
    /// Matrices with entries `±1/√d1`.
    LinfSetB,
}

impl ConstraintSetTag {
    /// Maximizer of `⟨X, Z⟩` over the set.
    pub fn project(self, z: &DenseMatrix) -> Result<DenseMatrix> {
        match self {
            Self::SpectralSetA => project_a(z, PolarMode::Exact),
            Self::LinfSetB => Ok(project_b(z, z.rows())),
        }
    }

    /// The attained maximum `max_{X∈set} ⟨X, Z⟩`.
    pub fn max_linear_score(self, z: &DenseMatrix) -> Result<f64> {
        Ok(self.project(z)?.dot(z))
    }
}

/// Projection onto `𝒜` (orthogonalization).
pub fn project_a(z: &DenseMatrix, mode: PolarMode) -> Result<DenseMatrix> {
    match mode {
        PolarMode::Exact => polar_factor_exact(z),
        PolarMode::NewtonSchulz(k) => newton_schulz(z, k),
    }
}

/// Projection onto `ℬ`: `sign(Z)/√d1`, with zero entries kept at zero.
pub fn project_b(z: &DenseMatrix, d1: usize) -> DenseMatrix {
    let mut s = sign_map(z);
    s.scale_inplace(1.0 / (d1 as f64).sqrt());
    s
}

/// `sign(P_𝒜(Z))`. The `1/√d1` factor of `P_ℬ` is left out because the
/// optimizer rescales the direction to a target RMS afterwards.
pub fn olion_direction(z: &DenseMatrix, mode: PolarMode) -> Result<DenseMatrix> {
    Ok(sign_map(&project_a(z, mode)?))
}

/// Distance of a direction from the Hadamard ideal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionReport {
    pub direction: DenseMatrix,
    /// `‖QᵀQ − I‖_F` after normalizing every column to unit length.
    pub dist_to_a: f64,
    /// `std(|D|) / mean(|D|)` over non-zero entries; zero for uniform magnitudes.
    pub entry_uniformity: f64,
}

pub fn hadamard_proximity(d: &DenseMatrix) -> Result<DirectionReport> {
    if d.linf_norm() <= ZERO_FLOOR {
        return Err(Error::ZeroMatrix);
    }
    let scales: Vec<f64> = (0..d.cols())
        .map(|j| {
            let n = d.column(j).iter().map(|x| x * x).sum::<f64>().sqrt();
            if n > 0.0 {
                1.0 / n
            } else {
                0.0
            }
        })
        .collect();
    let q = d.scale_columns(&scales);
    let gram = q.t_matmul(&q);
    let dist_to_a = (&gram - &DenseMatrix::identity(d.cols())).frobenius_norm();

    let mags: Vec<f64> = d.as_slice().iter().map(|x| x.abs()).filter(|&x| x > 0.0).collect();
    let n = mags.len() as f64;
    let mean = mags.iter().sum::<f64>() / n;
    let var = mags.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    Ok(DirectionReport {
        direction: d.clone(),
        dist_to_a,
        entry_uniformity: var.sqrt() / mean,
    })
}

/// Sylvester construction of the `2^k × 2^k` Hadamard matrix, scaled so its
/// columns have unit norm (entries `±1/√n`).
pub fn scaled_hadamard(order_log2: u32) -> DenseMatrix {
    let n = 1usize << order_log2;
    let scale = 1.0 / (n as f64).sqrt();
    DenseMatrix::from_fn(n, n, |i, j| if (i & j).count_ones() % 2 == 0 { scale } else { -scale })
}
