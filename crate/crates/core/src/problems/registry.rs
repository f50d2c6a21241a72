use serde::{Deserialize, Serialize};

use super::{low_rank_target, Activation, MatrixFactorization, Problem, Quadratic, SoftmaxClassifier, TinyMlp};
use crate::error::{Error, Result};
use crate::rng::gaussian_matrix_seeded;

/// A problem addressable by name, with its construction parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSpec {
    /// Target `A` is a seeded Gaussian matrix.
    Quadratic {
        rows: usize,
        cols: usize,
        #[serde(default)]
        data_seed: u64,
    },
    MatrixFactorization {
        rows: usize,
        cols: usize,
        rank: usize,
        k: usize,
        #[serde(default)]
        data_seed: u64,
    },
    Softmax {
        n_features: usize,
        n_classes: usize,
        n_samples: usize,
        #[serde(default)]
        data_seed: u64,
        #[serde(default = "default_separation")]
        separation: f64,
    },
    Mlp {
        widths: Vec<usize>,
        #[serde(default)]
        activation: Activation,
        n_samples: usize,
        #[serde(default)]
        data_seed: u64,
    },
}

fn default_separation() -> f64 {
    super::softmax::DEFAULT_CLASS_SEPARATION
}

impl ProblemSpec {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Quadratic { .. } => "quadratic",
            Self::MatrixFactorization { .. } => "matrix_factorization",
            Self::Softmax { .. } => "softmax",
            Self::Mlp { .. } => "mlp",
        }
    }
}

/// Builds the problem a spec names. Dimensions are checked here so a bad
/// config fails before any data is generated.
pub fn build_problem(spec: &ProblemSpec) -> Result<Box<dyn Problem>> {
    Ok(match spec {
        ProblemSpec::Quadratic { rows, cols, data_seed } => {
            if *rows == 0 || *cols == 0 {
                return Err(Error::InvalidDim(format!("quadratic target is {rows}x{cols}")));
            }
            Box::new(Quadratic::new(gaussian_matrix_seeded(*rows, *cols, *data_seed)))
        }
        ProblemSpec::MatrixFactorization {
            rows,
            cols,
            rank,
            k,
            data_seed,
        } => {
            if *rank == 0 || *rank > (*rows).min(*cols) {
                return Err(Error::InvalidRank {
                    rank: *rank,
                    d1: *rows,
                    d2: *cols,
                });
            }
            Box::new(MatrixFactorization::new(
                low_rank_target(*rows, *cols, *rank, *data_seed),
                *k,
            )?)
        }
        ProblemSpec::Softmax {
            n_features,
            n_classes,
            n_samples,
            data_seed,
            separation,
        } => Box::new(SoftmaxClassifier::with_separation(
            *n_features,
            *n_classes,
            *n_samples,
            *data_seed,
            *separation,
        )?),
        ProblemSpec::Mlp {
            widths,
            activation,
            n_samples,
            data_seed,
        } => Box::new(TinyMlp::new(widths, *activation, *n_samples, *data_seed)?),
    })
}
