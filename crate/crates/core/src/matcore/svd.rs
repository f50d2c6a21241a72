//! Householder QR and a one-sided Jacobi thin SVD.
//!
//! The SVD first reduces a tall `m×n` input to its `n×n` triangular factor
//! `R` and then orthogonalizes the columns of `R` with Hestenes (one-sided)
//! Jacobi rotations. The rotated columns are `U_R Σ`, and the accumulated
//! rotations are `V`. Relative accuracy of the singular values is close to
//! machine precision, which the polar-factor and diagnostics code relies on.

use crate::error::{Error, Result};
use crate::matcore::DenseMatrix;

/// Default relative rank tolerance: singular values at or below
/// `DEFAULT_RANK_TOL * σ_max` are dropped.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// Entries at or below this magnitude everywhere make a matrix "zero".
pub const ZERO_FLOOR: f64 = 1e-300;

const JACOBI_TOL: f64 = 1e-15;
const MAX_SWEEPS: usize = 80;

/// Rank-truncated thin SVD `M = U diag(σ) Vᵀ`.
#[derive(Debug, Clone)]
pub struct ThinSvd {
    /// `d1 × r`, orthonormal columns.
    pub u: DenseMatrix,
    /// Length `r`, non-increasing, strictly positive.
    pub singular_values: Vec<f64>,
    /// `d2 × r`, orthonormal columns.
    pub v: DenseMatrix,
}

impl ThinSvd {
    pub fn rank(&self) -> usize {
        self.singular_values.len()
    }

    /// `U diag(σ) Vᵀ`.
    pub fn reconstruct(&self) -> DenseMatrix {
        self.u.scale_columns(&self.singular_values).matmul_t(&self.v)
    }

    /// The polar factor `U Vᵀ` on the retained subspace.
    pub fn polar(&self) -> DenseMatrix {
        self.u.matmul_t(&self.v)
    }
}

/// Thin Householder QR of a tall matrix (`rows >= cols`): returns `(Q, R)`
/// with `Q` of shape `rows × cols` having orthonormal columns and `R` upper
/// triangular `cols × cols`.
pub fn qr_thin(a: &DenseMatrix) -> (DenseMatrix, DenseMatrix) {
    let (m, n) = a.shape();
    assert!(m >= n, "qr_thin expects a tall matrix, got {m}x{n}");
    let mut work = a.clone();
    let mut reflectors: Vec<Vec<f64>> = Vec::with_capacity(n);

    for k in 0..n {
        let mut v: Vec<f64> = (k..m).map(|i| work[(i, k)]).collect();
        let norm_x = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm_x == 0.0 {
            reflectors.push(Vec::new());
            continue;
        }
        let alpha = if v[0] >= 0.0 { -norm_x } else { norm_x };
        v[0] -= alpha;
        let norm_v = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm_v == 0.0 {
            reflectors.push(Vec::new());
            continue;
        }
        for x in &mut v {
            *x /= norm_v;
        }
        apply_reflector(&mut work, &v, k, k);
        reflectors.push(v);
    }

    let r = DenseMatrix::from_fn(n, n, |i, j| if i <= j { work[(i, j)] } else { 0.0 });
    let mut q = DenseMatrix::eye(m, n);
    for (k, v) in reflectors.iter().enumerate().rev() {
        if !v.is_empty() {
            apply_reflector(&mut q, v, k, 0);
        }
    }
    (q, r)
}

/// Applies `I − 2vvᵀ` to rows `row0..` and columns `col0..` of `a`.
fn apply_reflector(a: &mut DenseMatrix, v: &[f64], row0: usize, col0: usize) {
    let cols = a.cols();
    for j in col0..cols {
        let mut s = 0.0;
        for (t, &vi) in v.iter().enumerate() {
            s += vi * a[(row0 + t, j)];
        }
        if s == 0.0 {
            continue;
        }
        s *= 2.0;
        for (t, &vi) in v.iter().enumerate() {
            a[(row0 + t, j)] -= s * vi;
        }
    }
}

/// QR with the sign convention `diag(R) >= 0`. Applied to a Gaussian matrix
/// this makes `Q` Haar-distributed on the Stiefel manifold.
pub fn qr_thin_positive(a: &DenseMatrix) -> (DenseMatrix, DenseMatrix) {
    let (q, r) = qr_thin(a);
    let n = r.rows();
    let signs: Vec<f64> = (0..n).map(|i| if r[(i, i)] < 0.0 { -1.0 } else { 1.0 }).collect();
    let q = q.scale_columns(&signs);
    let r = DenseMatrix::from_fn(n, n, |i, j| signs[i] * r[(i, j)]);
    (q, r)
}

/// Full (untruncated) decomposition of a tall matrix, columns unsorted.
struct RawSvd {
    q: DenseMatrix,
    /// Columns of `R V` (each of length n), column-major.
    w: Vec<Vec<f64>>,
    /// Columns of `V`.
    v: Vec<Vec<f64>>,
}

fn jacobi_tall(a: &DenseMatrix) -> RawSvd {
    let (_, n) = a.shape();
    let (q, r) = qr_thin(a);
    let mut w: Vec<Vec<f64>> = (0..n).map(|j| r.column(j)).collect();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            e
        })
        .collect();

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for qi in p + 1..n {
                let (alpha, beta, gamma) = {
                    let (wp, wq) = (&w[p], &w[qi]);
                    let mut alpha = 0.0;
                    let mut beta = 0.0;
                    let mut gamma = 0.0;
                    for (x, y) in wp.iter().zip(wq) {
                        alpha += x * x;
                        beta += y * y;
                        gamma += x * y;
                    }
                    (alpha, beta, gamma)
                };
                if gamma == 0.0 || gamma.abs() <= JACOBI_TOL * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_pair(&mut w, p, qi, c, s);
                rotate_pair(&mut v, p, qi, c, s);
            }
        }
        if !rotated {
            break;
        }
    }
    RawSvd { q, w, v }
}

fn rotate_pair(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (left, right) = cols.split_at_mut(q);
    let (cp, cq) = (&mut left[p], &mut right[0]);
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let (a, b) = (*x, *y);
        *x = c * a - s * b;
        *y = s * a + c * b;
    }
}

fn max_abs(m: &DenseMatrix) -> f64 {
    m.linf_norm()
}

/// Rank-truncated thin SVD. Singular values `σᵢ <= rank_tol · σ_max` are
/// dropped. Wide inputs are handled by decomposing the transpose.
pub fn thin_svd(m: &DenseMatrix, rank_tol: f64) -> Result<ThinSvd> {
    if max_abs(m) <= ZERO_FLOOR {
        return Err(Error::ZeroMatrix);
    }
    if !m.is_finite() {
        return Err(Error::InvalidParam("matrix has non-finite entries".into()));
    }
    if m.rows() < m.cols() {
        let t = thin_svd(&m.transpose(), rank_tol)?;
        return Ok(ThinSvd {
            u: t.v,
            singular_values: t.singular_values,
            v: t.u,
        });
    }

    let n = m.cols();
    let raw = jacobi_tall(m);
    let norms: Vec<f64> = raw
        .w
        .iter()
        .map(|c| c.iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]));
    let sigma_max = norms[order[0]];
    if sigma_max <= ZERO_FLOOR {
        return Err(Error::ZeroMatrix);
    }
    let kept: Vec<usize> = order.into_iter().filter(|&j| norms[j] > rank_tol * sigma_max).collect();
    let r = kept.len();

    // U_R columns, n x r, then U = Q U_R.
    let u_r = DenseMatrix::from_fn(n, r, |i, k| raw.w[kept[k]][i] / norms[kept[k]]);
    let u = raw.q.matmul(&u_r);
    let v = DenseMatrix::from_fn(n, r, |i, k| raw.v[kept[k]][i]);
    let singular_values = kept.iter().map(|&j| norms[j]).collect();
    Ok(ThinSvd { u, singular_values, v })
}

/// All `min(rows, cols)` singular values in non-increasing order. Zero
/// matrices give all zeros rather than an error.
pub fn singular_values(m: &DenseMatrix) -> Vec<f64> {
    if m.rows() < m.cols() {
        return singular_values(&m.transpose());
    }
    if m.is_empty() || max_abs(m) <= ZERO_FLOOR {
        return vec![0.0; m.cols()];
    }
    let raw = jacobi_tall(m);
    let mut s: Vec<f64> = raw
        .w
        .iter()
        .map(|c| c.iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}
