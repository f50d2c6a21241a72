//! Small differentiable objectives with matrix parameters.
//!
//! Every problem is immutable after construction and evaluates losses and
//! gradients as pure functions of the parameters. Data come only from seeds.

mod factorization;
mod gradcheck;
mod mlp;
mod quadratic;
mod registry;
mod softmax;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matcore::DenseMatrix;
use crate::optimizers::{ParamBlock, ParamKind};
use crate::rng::{gaussian_matrix, mix_seed, seeded};

pub use factorization::{low_rank_target, MatrixFactorization};
pub use gradcheck::{estimate_local_smoothness, finite_difference_check, FD_FLOOR};
pub use mlp::{Activation, TinyMlp};
pub use quadratic::Quadratic;
pub use registry::{build_problem, ProblemSpec};
pub use softmax::SoftmaxClassifier;

/// Shape and routing of one parameter block.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockSpec {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub kind: ParamKind,
}

impl BlockSpec {
    pub fn matrix(name: impl Into<String>, rows: usize, cols: usize) -> Self {
        Self {
            name: name.into(),
            rows,
            cols,
            kind: ParamKind::MatrixShaped,
        }
    }

    pub fn vector(name: impl Into<String>, len: usize) -> Self {
        Self {
            name: name.into(),
            rows: 1,
            cols: len,
            kind: ParamKind::Fallback1d,
        }
    }
}

pub trait Problem: Send + Sync {
    fn name(&self) -> &str;

    fn block_specs(&self) -> Vec<BlockSpec>;

    /// Seeded initial parameters.
    fn init(&self, seed: u64) -> Vec<ParamBlock>;

    fn loss(&self, params: &[ParamBlock]) -> f64;

    /// Full gradient, one matrix per block.
    fn grad(&self, params: &[ParamBlock]) -> Vec<DenseMatrix>;

    fn loss_and_grad(&self, params: &[ParamBlock]) -> (f64, Vec<DenseMatrix>) {
        (self.loss(params), self.grad(params))
    }

    /// Number of data samples; 0 for problems without a dataset.
    fn n_samples(&self) -> usize {
        0
    }

    /// Gradient of the mean loss over the given samples. Problems without a
    /// dataset return the full gradient.
    fn grad_subset(&self, params: &[ParamBlock], _indices: &[usize]) -> Vec<DenseMatrix> {
        self.grad(params)
    }

    /// A global smoothness constant, when one is known analytically.
    fn smoothness(&self) -> Option<f64> {
        None
    }

    fn lower_bound(&self) -> f64 {
        0.0
    }

    /// Gradient over batch `step` of the epoch-shuffled sample order.
    fn minibatch_grad(
        &self,
        params: &[ParamBlock],
        batch_size: usize,
        shuffle_seed: u64,
        step: u64,
    ) -> Vec<DenseMatrix> {
        let n = self.n_samples();
        if n == 0 || batch_size >= n {
            return self.grad(params);
        }
        self.grad_subset(params, &minibatch_indices(n, batch_size, shuffle_seed, step))
    }
}

/// Indices of batch `step`. Each epoch is a fresh permutation seeded by
/// `(seed, epoch)` cut into `n / batch_size` disjoint batches; the remainder
/// of the permutation is dropped.
pub fn minibatch_indices(n: usize, batch_size: usize, seed: u64, step: u64) -> Vec<usize> {
    let batch_size = batch_size.clamp(1, n);
    let per_epoch = (n / batch_size) as u64;
    let epoch = step / per_epoch;
    let b = (step % per_epoch) as usize;
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut seeded(mix_seed(seed, epoch)));
    perm[b * batch_size..(b + 1) * batch_size].to_vec()
}

/// Checks that `params` match the problem's block layout.
pub fn validate_params(problem: &dyn Problem, params: &[ParamBlock]) -> Result<()> {
    let specs = problem.block_specs();
    if specs.len() != params.len() {
        return Err(Error::InvalidParam(format!(
            "problem '{}' has {} blocks, got {}",
            problem.name(),
            specs.len(),
            params.len()
        )));
    }
    for (s, p) in specs.iter().zip(params) {
        if s.name != p.name || s.kind != p.kind {
            return Err(Error::InvalidParam(format!(
                "expected block '{}' ({:?}), got '{}' ({:?})",
                s.name, s.kind, p.name, p.kind
            )));
        }
        p.matrix.check_shape((s.rows, s.cols))?;
    }
    Ok(())
}

/// Gaussian blocks scaled by `1/√cols` (vectors are zero).
pub(crate) fn init_blocks(specs: &[BlockSpec], seed: u64) -> Vec<ParamBlock> {
    let mut rng = seeded(seed);
    specs
        .iter()
        .map(|s| {
            let matrix = match s.kind {
                ParamKind::MatrixShaped => {
                    gaussian_matrix(s.rows, s.cols, &mut rng).scaled(1.0 / (s.cols as f64).sqrt())
                }
                ParamKind::Fallback1d => DenseMatrix::zeros(s.rows, s.cols),
            };
            ParamBlock {
                name: s.name.clone(),
                matrix,
                kind: s.kind,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn epoch_batches_partition_samples() {
        let mut seen: Vec<usize> = (0..4).flat_map(|s| minibatch_indices(12, 3, 7, s)).collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..12).collect::<Vec<_>>());
        assert_ne!(minibatch_indices(12, 3, 7, 0), minibatch_indices(12, 3, 7, 4));
        assert_eq!(minibatch_indices(12, 3, 7, 5), minibatch_indices(12, 3, 7, 5));
    }

    #[test]
    fn remainder_is_dropped() {
        let mut seen: Vec<usize> = (0..3).flat_map(|s| minibatch_indices(10, 3, 1, s)).collect();
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen.len(), 9);
    }
}
