use super::Problem;
use crate::matcore::DenseMatrix;
use crate::optimizers::ParamBlock;
use crate::rng::{gaussian_matrix, seeded};

/// Absolute floor of the relative-error denominator.
pub const FD_FLOOR: f64 = 1e-8;

/// Central-difference check of the analytic gradient.
///
/// Entry `(i, j)` is perturbed by `h·(1 + |X_ij|)`. For each block the error
/// is `‖fd − g‖_∞ / max(‖g‖_∞, ‖fd‖_∞, FD_FLOOR)`; the worst block is returned.
pub fn finite_difference_check(p: &dyn Problem, params: &[ParamBlock], h: f64) -> f64 {
    assert!(h > 0.0, "finite-difference step must be positive");
    let analytic = p.grad(params);
    let mut work = params.to_vec();
    let mut worst: f64 = 0.0;
    for (b, g) in analytic.iter().enumerate() {
        let mut fd = DenseMatrix::zeros(g.rows(), g.cols());
        for k in 0..g.len() {
            let x = params[b].matrix.as_slice()[k];
            let step = h * (1.0 + x.abs());
            work[b].matrix.as_mut_slice()[k] = x + step;
            let up = p.loss(&work);
            work[b].matrix.as_mut_slice()[k] = x - step;
            let down = p.loss(&work);
            work[b].matrix.as_mut_slice()[k] = x;
            fd.as_mut_slice()[k] = (up - down) / (2.0 * step);
        }
        let scale = g.linf_norm().max(fd.linf_norm()).max(FD_FLOOR);
        worst = worst.max(fd.max_abs_diff(g) / scale);
    }
    worst
}

/// Largest `‖∇f(X) − ∇f(Y)‖_F / ‖X − Y‖_F` over `pairs` random pairs in a
/// ball of the given radius around `params`. An estimate, not a bound.
pub fn estimate_local_smoothness(p: &dyn Problem, params: &[ParamBlock], radius: f64, pairs: usize, seed: u64) -> f64 {
    let mut rng = seeded(seed);
    let mut perturb = |src: &[ParamBlock], scale: f64| -> Vec<ParamBlock> {
        src.iter()
            .map(|b| {
                let (r, c) = b.shape();
                let mut out = b.clone();
                out.matrix.axpy(scale, &gaussian_matrix(r, c, &mut rng));
                out
            })
            .collect()
    };
    let mut best: f64 = 0.0;
    for _ in 0..pairs {
        let x = perturb(params, radius);
        let y = perturb(&x, 0.1 * radius);
        let (gx, gy) = (p.grad(&x), p.grad(&y));
        let num: f64 = gx.iter().zip(&gy).map(|(a, b)| (a - b).sum_sq()).sum();
        let den: f64 = x.iter().zip(&y).map(|(a, b)| (&a.matrix - &b.matrix).sum_sq()).sum();
        if den > 0.0 {
            best = best.max((num / den).sqrt());
        }
    }
    best
}
