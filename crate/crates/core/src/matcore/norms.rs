use serde::{Deserialize, Serialize};

use crate::matcore::svd::singular_values;
use crate::matcore::DenseMatrix;

/// The five matrix norms tracked along training trajectories.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormSuite {
    pub frobenius: f64,
    pub spectral: f64,
    pub nuclear: f64,
    /// Entrywise `Σ|Mᵢⱼ|`.
    pub l1: f64,
    /// Entrywise `max|Mᵢⱼ|`.
    pub linf: f64,
}

pub fn frobenius_norm(m: &DenseMatrix) -> f64 {
    m.frobenius_norm()
}

pub fn norm_suite(m: &DenseMatrix) -> NormSuite {
    let s = singular_values(m);
    NormSuite {
        frobenius: m.frobenius_norm(),
        spectral: s.first().copied().unwrap_or(0.0),
        nuclear: s.iter().sum(),
        l1: m.l1_norm(),
        linf: m.linf_norm(),
    }
}
