use super::{BlockSpec, Problem};
use crate::error::{Error, Result};
use crate::matcore::DenseMatrix;
use crate::optimizers::ParamBlock;
use crate::rng::{gaussian_matrix, seeded};

/// `f(W1, W2) = ½‖W1·W2 − Y‖_F²` with inner dimension `k`. Not globally
/// smooth, so no smoothness constant is reported.
#[derive(Debug, Clone)]
pub struct MatrixFactorization {
    target: DenseMatrix,
    k: usize,
}

/// `Y = A·Bᵀ/√rank` with Gaussian `A` (d1×rank) and `B` (d2×rank), so the
/// entries of `Y` have unit variance.
pub fn low_rank_target(d1: usize, d2: usize, rank: usize, seed: u64) -> DenseMatrix {
    let mut rng = seeded(seed);
    let a = gaussian_matrix(d1, rank, &mut rng);
    let b = gaussian_matrix(d2, rank, &mut rng);
    a.matmul_t(&b).scaled(1.0 / (rank as f64).sqrt())
}

impl MatrixFactorization {
    pub fn new(target: DenseMatrix, k: usize) -> Result<Self> {
        let (d1, d2) = target.shape();
        if k == 0 || k > d1.min(d2) {
            return Err(Error::InvalidDim(format!(
                "inner dimension {k} must lie in 1..={} for a {d1}x{d2} target",
                d1.min(d2)
            )));
        }
        Ok(Self { target, k })
    }

    fn residual(&self, params: &[ParamBlock]) -> DenseMatrix {
        &params[0].matrix.matmul(&params[1].matrix) - &self.target
    }
}

impl Problem for MatrixFactorization {
    fn name(&self) -> &str {
        "matrix_factorization"
    }

    fn block_specs(&self) -> Vec<BlockSpec> {
        let (d1, d2) = self.target.shape();
        vec![BlockSpec::matrix("w1", d1, self.k), BlockSpec::matrix("w2", self.k, d2)]
    }

    /// Small Gaussian factors (entry std 0.1).
    fn init(&self, seed: u64) -> Vec<ParamBlock> {
        let mut rng = seeded(seed);
        self.block_specs()
            .into_iter()
            .map(|s| ParamBlock::matrix(s.name, gaussian_matrix(s.rows, s.cols, &mut rng).scaled(0.1)))
            .collect()
    }

    fn loss(&self, params: &[ParamBlock]) -> f64 {
        0.5 * self.residual(params).sum_sq()
    }

    fn grad(&self, params: &[ParamBlock]) -> Vec<DenseMatrix> {
        let r = self.residual(params);
        vec![r.matmul_t(&params[1].matrix), params[0].matrix.t_matmul(&r)]
    }

    fn loss_and_grad(&self, params: &[ParamBlock]) -> (f64, Vec<DenseMatrix>) {
        let r = self.residual(params);
        let g = vec![r.matmul_t(&params[1].matrix), params[0].matrix.t_matmul(&r)];
        (0.5 * r.sum_sq(), g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_factors_give_zero_loss() {
        let mut rng = seeded(3);
        let w1 = gaussian_matrix(6, 2, &mut rng);
        let w2 = gaussian_matrix(2, 5, &mut rng);
        let p = MatrixFactorization::new(w1.matmul(&w2), 2).unwrap();
        let params = vec![ParamBlock::matrix("w1", w1), ParamBlock::matrix("w2", w2)];
        assert!(p.loss(&params) < 1e-25);
    }

    #[test]
    fn inner_dim_checked() {
        let y = low_rank_target(4, 3, 2, 0);
        assert!(matches!(
            MatrixFactorization::new(y.clone(), 4),
            Err(Error::InvalidDim(_))
        ));
        assert!(MatrixFactorization::new(y, 3).is_ok());
    }

    #[test]
    fn target_has_requested_rank() {
        let y = low_rank_target(10, 8, 3, 5);
        let s = crate::matcore::singular_values(&y);
        assert!(s[2] > 1e-6 * s[0]);
        assert!(s[3] < 1e-12 * s[0]);
    }
}
