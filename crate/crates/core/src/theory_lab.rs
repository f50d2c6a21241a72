//! Monte-Carlo study of the isotropy constant for Haar-random singular
//! vectors, and a log-log fit of its scaling in `√(r·log r / (d1·d2))`.

use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::isotropy_from_factors;
use crate::error::{Error, Result};
use crate::matcore::{qr_thin_positive, DenseMatrix};
use crate::rng::{gaussian_matrix, mix_seed, seeded};

/// Minimum trials per cell before a fit is reported.
pub const MIN_TRIALS_FOR_FIT: usize = 30;
pub const MIN_GRID_CELLS: usize = 4;
/// Required ratio between the largest and smallest `d1·d2` in a fit.
pub const MIN_GRID_SPAN: f64 = 8.0;

#[derive(Debug, Clone, PartialEq)]
pub struct HaarPair {
    pub u: DenseMatrix,
    pub v: DenseMatrix,
    pub seed: u64,
}

/// Orthonormal `U` (d1×r) and `V` (d2×r) from QR of Gaussian matrices, with
/// `diag(R) ≥ 0` so the factors are Haar distributed.
pub fn sample_haar_pair(d1: usize, d2: usize, r: usize, seed: u64) -> Result<HaarPair> {
    if r == 0 || r > d1.min(d2) {
        return Err(Error::InvalidRank { rank: r, d1, d2 });
    }
    let mut rng = seeded(seed);
    let a = gaussian_matrix(d1, r, &mut rng);
    let b = gaussian_matrix(d2, r, &mut rng);
    Ok(HaarPair {
        u: qr_thin_positive(&a).0,
        v: qr_thin_positive(&b).0,
        seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McSample {
    pub trial: usize,
    pub eps: f64,
    pub q_l1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonMc {
    pub mean_eps: f64,
    /// Sample standard deviation (`n − 1` denominator; 0 for one trial).
    pub std_eps: f64,
    pub samples: Vec<McSample>,
}

fn summarize(samples: Vec<McSample>) -> EpsilonMc {
    let n = samples.len() as f64;
    let mean = samples.iter().map(|s| s.eps).sum::<f64>() / n;
    let var = if samples.len() > 1 {
        samples.iter().map(|s| (s.eps - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    EpsilonMc {
        mean_eps: mean,
        std_eps: var.sqrt(),
        samples,
    }
}

/// `ε` of `Q = UVᵀ` over `trials` Haar pairs. Trial `t` uses seed `seed + t`,
/// so the samples do not depend on the number of worker threads.
pub fn epsilon_mc(d1: usize, d2: usize, r: usize, trials: usize, seed: u64) -> Result<EpsilonMc> {
    if r < 2 || r > d1.min(d2) {
        return Err(Error::InvalidRank { rank: r, d1, d2 });
    }
    if trials == 0 {
        return Err(Error::InvalidParam("trials must be positive".into()));
    }
    let samples = (0..trials)
        .into_par_iter()
        .map(|t| {
            let pair = sample_haar_pair(d1, d2, r, seed.wrapping_add(t as u64))?;
            let rep = isotropy_from_factors(&pair.u, &pair.v)?;
            Ok(McSample {
                trial: t,
                eps: rep.epsilon,
                q_l1: rep.q_l1,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize(samples))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyCell {
    pub d1: usize,
    pub d2: usize,
    pub r: usize,
    pub samples: Vec<McSample>,
}

impl StudyCell {
    pub fn mean_eps(&self) -> f64 {
        self.samples.iter().map(|s| s.eps).sum::<f64>() / self.samples.len() as f64
    }

    /// `√(r·ln r / (d1·d2))`.
    pub fn law_predictor(&self) -> f64 {
        law_predictor(self.d1, self.d2, self.r)
    }
}

pub fn law_predictor(d1: usize, d2: usize, r: usize) -> f64 {
    let r = r as f64;
    (r * r.ln() / (d1 * d2) as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingStudy {
    pub cells: Vec<StudyCell>,
}

/// Runs [`epsilon_mc`] on every `(d1, d2, r)` cell. Cell `i` uses base seed
/// `mix_seed(seed, i)`.
pub fn run_scaling_study(grid: &[(usize, usize, usize)], trials: usize, seed: u64) -> Result<ScalingStudy> {
    let cells = grid
        .iter()
        .enumerate()
        .map(|(i, &(d1, d2, r))| {
            let mc = epsilon_mc(d1, d2, r, trials, mix_seed(seed, i as u64))?;
            Ok(StudyCell {
                d1,
                d2,
                r,
                samples: mc.samples,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ScalingStudy { cells })
}

impl ScalingStudy {
    /// CSV with columns `d1,d2,r,trial,eps,q_l1`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "d1,d2,r,trial,eps,q_l1")?;
        for c in &self.cells {
            for s in &c.samples {
                writeln!(
                    w,
                    "{},{},{},{},{:.16e},{:.16e}",
                    c.d1, c.d2, c.r, s.trial, s.eps, s.q_l1
                )?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// `(d1, d2, r)` of the fitted cells.
    pub grid: Vec<(usize, usize, usize)>,
}

/// Ordinary least squares `y = slope·x + intercept`, with `r²`.
pub fn ols(points: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (slope, intercept, r_squared)
}

/// Fits `log(mean ε)` against `log √(r·ln r / (d1·d2))` across cells.
pub fn fit_scaling_law(study: &ScalingStudy) -> Result<ScalingFit> {
    let cells = &study.cells;
    if cells.len() < MIN_GRID_CELLS {
        return Err(Error::InsufficientGrid(format!(
            "{} cells, need at least {MIN_GRID_CELLS}",
            cells.len()
        )));
    }
    if let Some(c) = cells.iter().find(|c| c.samples.len() < MIN_TRIALS_FOR_FIT) {
        return Err(Error::InsufficientGrid(format!(
            "cell {}x{} r={} has {} trials, need {MIN_TRIALS_FOR_FIT}",
            c.d1,
            c.d2,
            c.r,
            c.samples.len()
        )));
    }
    if let Some(c) = cells.iter().find(|c| c.r < 2) {
        return Err(Error::InvalidRank {
            rank: c.r,
            d1: c.d1,
            d2: c.d2,
        });
    }
    let sizes: Vec<f64> = cells.iter().map(|c| (c.d1 * c.d2) as f64).collect();
    let lo = sizes.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = sizes.iter().copied().fold(0.0, f64::max);
    if hi / lo < MIN_GRID_SPAN {
        return Err(Error::InsufficientGrid(format!(
            "d1*d2 spans {:.2}x, need {MIN_GRID_SPAN}x",
            hi / lo
        )));
    }
    let points: Vec<(f64, f64)> = cells
        .iter()
        .map(|c| (c.law_predictor().ln(), c.mean_eps().ln()))
        .collect();
    let (slope, intercept, r_squared) = ols(&points);
    Ok(ScalingFit {
        slope,
        intercept,
        r_squared,
        grid: cells.iter().map(|c| (c.d1, c.d2, c.r)).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(grid: &[(usize, usize, usize)], coeff: f64) -> ScalingStudy {
        let cells = grid
            .iter()
            .map(|&(d1, d2, r)| StudyCell {
                d1,
                d2,
                r,
                samples: (0..MIN_TRIALS_FOR_FIT)
                    .map(|trial| McSample {
                        trial,
                        eps: coeff * law_predictor(d1, d2, r),
                        q_l1: 1.0,
                    })
                    .collect(),
            })
            .collect();
        ScalingStudy { cells }
    }

    #[test]
    fn exact_law_fits_slope_one() {
        let grid = [(64, 64, 8), (128, 128, 8), (256, 256, 8), (512, 512, 8)];
        let fit = fit_scaling_law(&synthetic(&grid, 1.7)).unwrap();
        assert!((fit.slope - 1.0).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
        assert!((fit.intercept - 1.7f64.ln()).abs() < 1e-10);
    }

    #[test]
    fn small_grids_rejected() {
        let grid = [(64, 64, 8), (128, 128, 8), (256, 256, 8)];
        assert!(matches!(
            fit_scaling_law(&synthetic(&grid, 1.0)),
            Err(Error::InsufficientGrid(_))
        ));
        let narrow = [(64, 64, 8), (64, 80, 8), (80, 80, 8), (90, 90, 8)];
        assert!(matches!(
            fit_scaling_law(&synthetic(&narrow, 1.0)),
            Err(Error::InsufficientGrid(_))
        ));
    }

    #[test]
    fn haar_pair_square_two() {
        let p = sample_haar_pair(2, 2, 2, 9).unwrap();
        let g = p.u.t_matmul(&p.u);
        assert!(g.max_abs_diff(&DenseMatrix::identity(2)) < 1e-14);
        assert!(p.u.matmul_t(&p.u).max_abs_diff(&DenseMatrix::identity(2)) < 1e-14);
    }

    #[test]
    fn rank_checks() {
        assert!(matches!(sample_haar_pair(4, 3, 4, 0), Err(Error::InvalidRank { .. })));
        assert!(matches!(epsilon_mc(8, 8, 1, 5, 0), Err(Error::InvalidRank { .. })));
    }

    #[test]
    fn mc_is_reproducible() {
        let a = epsilon_mc(16, 12, 3, 8, 42).unwrap();
        let b = epsilon_mc(16, 12, 3, 8, 42).unwrap();
        assert_eq!(a, b);
        assert!(a.samples.iter().enumerate().all(|(i, s)| s.trial == i));
    }
}
