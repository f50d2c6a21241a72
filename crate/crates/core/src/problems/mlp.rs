use serde::{Deserialize, Serialize};

use super::{init_blocks, BlockSpec, Problem};
use crate::error::{Error, Result};
use crate::matcore::DenseMatrix;
use crate::optimizers::{ParamBlock, ParamKind};
use crate::rng::{gaussian_matrix, seeded};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Tanh,
    Identity,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Self::Tanh => z.tanh(),
            Self::Identity => z,
        }
    }

    /// Derivative expressed through the activation output `h`.
    fn derivative_from_output(self, h: f64) -> f64 {
        match self {
            Self::Tanh => 1.0 - h * h,
            Self::Identity => 1.0,
        }
    }
}

/// Squared-loss regression of a seeded teacher network by a student of the
/// same architecture. Layer `l` has weight `w{l}` (`widths[l+1] × widths[l]`)
/// and bias `b{l}` (`1 × widths[l+1]`); the output layer is linear.
#[derive(Debug, Clone)]
pub struct TinyMlp {
    widths: Vec<usize>,
    activation: Activation,
    inputs: DenseMatrix,
    targets: DenseMatrix,
    teacher: Vec<ParamBlock>,
}

struct Forward {
    /// Layer inputs `H_0 … H_{L-1}` and the output.
    hs: Vec<DenseMatrix>,
}

impl TinyMlp {
    pub const DEFAULT_WIDTHS: [usize; 5] = [8, 32, 16, 24, 4];

    pub fn new(widths: &[usize], activation: Activation, n_samples: usize, data_seed: u64) -> Result<Self> {
        if widths.len() < 3 {
            return Err(Error::InvalidDim(format!(
                "an MLP needs at least 2 layers, got widths {widths:?}"
            )));
        }
        if widths.contains(&0) || n_samples == 0 {
            return Err(Error::InvalidDim("widths and n_samples must be positive".into()));
        }
        let specs = Self::specs(widths);
        let mut rng = seeded(data_seed);
        let teacher: Vec<ParamBlock> = specs
            .iter()
            .map(|s| {
                let g = gaussian_matrix(s.rows, s.cols, &mut rng);
                let matrix = match s.kind {
                    ParamKind::MatrixShaped => g.scaled(1.0 / (s.cols as f64).sqrt()),
                    ParamKind::Fallback1d => g.scaled(0.1),
                };
                ParamBlock {
                    name: s.name.clone(),
                    matrix,
                    kind: s.kind,
                }
            })
            .collect();
        let inputs = gaussian_matrix(n_samples, widths[0], &mut rng);
        let mut mlp = Self {
            widths: widths.to_vec(),
            activation,
            inputs,
            targets: DenseMatrix::zeros(0, 0),
            teacher,
        };
        let all: Vec<usize> = (0..n_samples).collect();
        mlp.targets = mlp.forward(&mlp.teacher, &all).hs.pop().expect("output layer");
        Ok(mlp)
    }

    fn specs(widths: &[usize]) -> Vec<BlockSpec> {
        widths
            .windows(2)
            .enumerate()
            .flat_map(|(l, w)| {
                [
                    BlockSpec::matrix(format!("w{l}"), w[1], w[0]),
                    BlockSpec::vector(format!("b{l}"), w[1]),
                ]
            })
            .collect()
    }

    pub fn teacher(&self) -> &[ParamBlock] {
        &self.teacher
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    fn layers(&self) -> usize {
        self.widths.len() - 1
    }

    fn gather_rows(m: &DenseMatrix, idx: &[usize]) -> DenseMatrix {
        DenseMatrix::from_fn(idx.len(), m.cols(), |i, j| m.get(idx[i], j))
    }

    fn forward(&self, params: &[ParamBlock], idx: &[usize]) -> Forward {
        let mut hs = vec![Self::gather_rows(&self.inputs, idx)];
        for l in 0..self.layers() {
            let w = &params[2 * l].matrix;
            let b = params[2 * l + 1].matrix.as_slice();
            let h = hs.last().expect("layer input");
            let mut z = h.matmul_t(w);
            let cols = z.cols();
            let last = l + 1 == self.layers();
            for (k, v) in z.as_mut_slice().iter_mut().enumerate() {
                *v += b[k % cols];
                if !last {
                    *v = self.activation.apply(*v);
                }
            }
            hs.push(z);
        }
        Forward { hs }
    }

    fn eval(&self, params: &[ParamBlock], idx: &[usize], want_grad: bool) -> (f64, Vec<DenseMatrix>) {
        let fw = self.forward(params, idx);
        let n = idx.len() as f64;
        let out = fw.hs.last().expect("output");
        let y = Self::gather_rows(&self.targets, idx);
        let diff = out - &y;
        let loss = 0.5 * diff.sum_sq() / n;
        if !want_grad {
            return (loss, Vec::new());
        }
        let mut grads = vec![DenseMatrix::zeros(0, 0); params.len()];
        let mut dz = diff.scaled(1.0 / n);
        for l in (0..self.layers()).rev() {
            let h = &fw.hs[l];
            grads[2 * l] = dz.t_matmul(h);
            let mut db = DenseMatrix::zeros(1, dz.cols());
            for i in 0..dz.rows() {
                db.as_mut_slice().iter_mut().zip(dz.row(i)).for_each(|(a, b)| *a += b);
            }
            grads[2 * l + 1] = db;
            if l > 0 {
                let dh = dz.matmul(&params[2 * l].matrix);
                let act = self.activation;
                dz = dh.zip_map(h, |g, hv| g * act.derivative_from_output(hv));
            }
        }
        (loss, grads)
    }

    fn all(&self) -> Vec<usize> {
        (0..self.inputs.rows()).collect()
    }
}

impl Problem for TinyMlp {
    fn name(&self) -> &str {
        "mlp"
    }

    fn block_specs(&self) -> Vec<BlockSpec> {
        Self::specs(&self.widths)
    }

    /// Weights Gaussian with std `1/√fan_in`, biases zero.
    fn init(&self, seed: u64) -> Vec<ParamBlock> {
        init_blocks(&self.block_specs(), seed)
    }

    fn loss(&self, params: &[ParamBlock]) -> f64 {
        self.eval(params, &self.all(), false).0
    }

    fn grad(&self, params: &[ParamBlock]) -> Vec<DenseMatrix> {
        self.eval(params, &self.all(), true).1
    }

    fn loss_and_grad(&self, params: &[ParamBlock]) -> (f64, Vec<DenseMatrix>) {
        self.eval(params, &self.all(), true)
    }

    fn n_samples(&self) -> usize {
        self.inputs.rows()
    }

    fn grad_subset(&self, params: &[ParamBlock], indices: &[usize]) -> Vec<DenseMatrix> {
        self.eval(params, indices, true).1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn student_at_teacher_is_optimal() {
        let p = TinyMlp::new(&TinyMlp::DEFAULT_WIDTHS, Activation::Tanh, 32, 4).unwrap();
        let t = p.teacher().to_vec();
        assert_eq!(p.loss(&t), 0.0);
        assert!(p.grad(&t).iter().all(|g| g.is_zero()));
    }

    #[test]
    fn block_layout() {
        let p = TinyMlp::new(&TinyMlp::DEFAULT_WIDTHS, Activation::Tanh, 8, 0).unwrap();
        let specs = p.block_specs();
        assert_eq!(specs.len(), 8);
        assert_eq!((specs[0].rows, specs[0].cols), (32, 8));
        assert_eq!((specs[2].rows, specs[2].cols), (16, 32));
        assert_eq!(specs[1].kind, ParamKind::Fallback1d);
        let grads = p.grad(&p.init(1));
        for (g, s) in grads.iter().zip(&specs) {
            assert_eq!(g.shape(), (s.rows, s.cols));
        }
    }

    #[test]
    fn too_few_layers_rejected() {
        assert!(TinyMlp::new(&[4, 2], Activation::Tanh, 8, 0).is_err());
    }
}
