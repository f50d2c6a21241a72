use super::{init_blocks, BlockSpec, Problem};
use crate::matcore::DenseMatrix;
use crate::optimizers::ParamBlock;

/// `f(X) = ½‖X − A‖_F²`: gradient `X − A`, smoothness 1, minimum 0.
#[derive(Debug, Clone)]
pub struct Quadratic {
    target: DenseMatrix,
}

impl Quadratic {
    pub fn new(target: DenseMatrix) -> Self {
        Self { target }
    }

    pub fn target(&self) -> &DenseMatrix {
        &self.target
    }
}

impl Problem for Quadratic {
    fn name(&self) -> &str {
        "quadratic"
    }

    fn block_specs(&self) -> Vec<BlockSpec> {
        vec![BlockSpec::matrix("x", self.target.rows(), self.target.cols())]
    }

    fn init(&self, seed: u64) -> Vec<ParamBlock> {
        init_blocks(&self.block_specs(), seed)
    }

    fn loss(&self, params: &[ParamBlock]) -> f64 {
        0.5 * (&params[0].matrix - &self.target).sum_sq()
    }

    fn grad(&self, params: &[ParamBlock]) -> Vec<DenseMatrix> {
        vec![&params[0].matrix - &self.target]
    }

    fn smoothness(&self) -> Option<f64> {
        Some(1.0)
    }
}
