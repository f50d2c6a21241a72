//! Orthogonalization: exact polar factor, Newton–Schulz approximation, and
//! the entrywise sign map.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matcore::svd::{thin_svd, DEFAULT_RANK_TOL, ZERO_FLOOR};
use crate::matcore::DenseMatrix;

/// Relative slack added to the Frobenius pre-normalization so that every
/// singular value of the starting iterate is strictly below one.
pub const NS_NORM_EPS: f64 = 1e-7;

/// Coefficients of the odd quintic `p(x) = a x + b x³ + c x⁵` applied to the
/// singular values by one Newton–Schulz step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NsCoefficients {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl NsCoefficients {
    /// `(15/8, −5/4, 3/8)`: monotone on `[0, 1]` with `p(1) = 1` and
    /// `p'(1) = p''(1) = 0`, so singular values converge to exactly one.
    pub const CONVERGENT: Self = Self {
        a: 1.875,
        b: -1.25,
        c: 0.375,
    };

    /// Aggressive Muon coefficients. Fast growth of small singular values,
    /// but the iterates oscillate in roughly `[0.7, 1.2]` instead of converging.
    pub const MUON: Self = Self {
        a: 3.4445,
        b: -4.7750,
        c: 2.0315,
    };
}

impl Default for NsCoefficients {
    fn default() -> Self {
        Self::CONVERGENT
    }
}

/// Exact polar factor `U Vᵀ` of the thin SVD.
///
/// For tall full-rank inputs the result has orthonormal columns; for wide
/// inputs it has orthonormal rows. Positive scaling of `m` does not change it.
pub fn polar_factor_exact(m: &DenseMatrix) -> Result<DenseMatrix> {
    if m.rows() < m.cols() {
        return Ok(polar_factor_exact(&m.transpose())?.transpose());
    }
    Ok(thin_svd(m, DEFAULT_RANK_TOL)?.polar())
}

/// `K`-step Newton–Schulz approximation of the polar factor with the default
/// (convergent) coefficients.
pub fn newton_schulz(m: &DenseMatrix, steps: usize) -> Result<DenseMatrix> {
    newton_schulz_with(m, steps, NsCoefficients::default())
}

/// Newton–Schulz with explicit coefficients.
///
/// The input is scaled by `1 / (‖M‖_F (1 + NS_NORM_EPS))`, which makes the
/// output invariant under positive scaling. With `steps == 0` the normalized
/// input is returned.
pub fn newton_schulz_with(m: &DenseMatrix, steps: usize, coeffs: NsCoefficients) -> Result<DenseMatrix> {
    if m.linf_norm() <= ZERO_FLOOR {
        return Err(Error::ZeroMatrix);
    }
    if m.rows() < m.cols() {
        return Ok(newton_schulz_with(&m.transpose(), steps, coeffs)?.transpose());
    }
    let norm = m.frobenius_norm();
    let mut x = m.scaled(1.0 / (norm * (1.0 + NS_NORM_EPS)));
    let NsCoefficients { a, b, c } = coeffs;
    for _ in 0..steps {
        // X ← aX + X(b A + c A²) with A = XᵀX; equal to aX + b(XXᵀ)X + c(XXᵀ)²X
        // but only forms the small d2×d2 Gram matrix.
        let gram = x.t_matmul(&x);
        let mut poly = gram.matmul(&gram);
        poly.scale_inplace(c);
        poly.axpy(b, &gram);
        let mut next = x.matmul(&poly);
        next.axpy(a, &x);
        x = next;
    }
    Ok(x)
}

#[inline]
fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Entrywise sign with `sign(0) = 0`.
pub fn sign_map(m: &DenseMatrix) -> DenseMatrix {
    m.map(sign)
}
