use super::{BlockSpec, Problem};
use crate::error::{Error, Result};
use crate::matcore::{singular_values, DenseMatrix};
use crate::optimizers::ParamBlock;
use crate::rng::{gaussian_matrix, seeded};

pub const DEFAULT_CLASS_SEPARATION: f64 = 1.0;

/// Multinomial logistic regression on Gaussian blobs. `W` is
/// `n_classes × n_features` with no bias; the loss is the mean cross-entropy.
#[derive(Debug, Clone)]
pub struct SoftmaxClassifier {
    features: DenseMatrix,
    labels: Vec<usize>,
    n_classes: usize,
    smoothness: f64,
}

impl SoftmaxClassifier {
    pub fn new(n_features: usize, n_classes: usize, n_samples: usize, data_seed: u64) -> Result<Self> {
        Self::with_separation(n_features, n_classes, n_samples, data_seed, DEFAULT_CLASS_SEPARATION)
    }

    /// Class means have i.i.d. `N(0, separation²)` entries; sample `i` has
    /// label `i mod n_classes` and unit-variance Gaussian noise around its mean.
    pub fn with_separation(
        n_features: usize,
        n_classes: usize,
        n_samples: usize,
        data_seed: u64,
        separation: f64,
    ) -> Result<Self> {
        if n_classes < 2 {
            return Err(Error::InvalidParam("softmax needs at least 2 classes".into()));
        }
        if n_features == 0 || n_samples == 0 {
            return Err(Error::InvalidDim("softmax needs features and samples".into()));
        }
        let mut rng = seeded(data_seed);
        let means = gaussian_matrix(n_classes, n_features, &mut rng).scaled(separation);
        let noise = gaussian_matrix(n_samples, n_features, &mut rng);
        let labels: Vec<usize> = (0..n_samples).map(|i| i % n_classes).collect();
        let features = DenseMatrix::from_fn(n_samples, n_features, |i, j| means.get(labels[i], j) + noise.get(i, j));
        // Hessian of cross-entropy in the logits is bounded by I/2.
        let s_max = singular_values(&features)[0];
        let smoothness = s_max * s_max / (2.0 * n_samples as f64);
        Ok(Self {
            features,
            labels,
            n_classes,
            smoothness,
        })
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn features(&self) -> &DenseMatrix {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Mean loss and gradient over the rows in `idx`.
    fn eval(&self, w: &DenseMatrix, idx: &[usize]) -> (f64, DenseMatrix) {
        let f = self.features.cols();
        let c = self.n_classes;
        let mut grad = DenseMatrix::zeros(c, f);
        let mut loss = 0.0;
        let mut p = vec![0.0; c];
        for &i in idx {
            let x = self.features.row(i);
            for (k, pk) in p.iter_mut().enumerate() {
                *pk = w.row(k).iter().zip(x).map(|(a, b)| a * b).sum();
            }
            let max = p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let y = self.labels[i];
            let margin = max - p[y];
            let mut z = 0.0;
            for pk in p.iter_mut() {
                *pk = (*pk - max).exp();
                z += *pk;
            }
            loss += z.ln() + margin;
            for (k, pk) in p.iter().enumerate() {
                let coef = pk / z - if k == y { 1.0 } else { 0.0 };
                let row = &mut grad.as_mut_slice()[k * f..(k + 1) * f];
                row.iter_mut().zip(x).for_each(|(g, xi)| *g += coef * xi);
            }
        }
        let n = idx.len() as f64;
        grad.scale_inplace(1.0 / n);
        (loss / n, grad)
    }

    fn all(&self) -> Vec<usize> {
        (0..self.labels.len()).collect()
    }
}

impl Problem for SoftmaxClassifier {
    fn name(&self) -> &str {
        "softmax"
    }

    fn block_specs(&self) -> Vec<BlockSpec> {
        vec![BlockSpec::matrix("w", self.n_classes, self.features.cols())]
    }

    /// Small Gaussian weights (entry std 0.01).
    fn init(&self, seed: u64) -> Vec<ParamBlock> {
        let (r, c) = (self.n_classes, self.features.cols());
        vec![ParamBlock::matrix(
            "w",
            gaussian_matrix(r, c, &mut seeded(seed)).scaled(0.01),
        )]
    }

    fn loss(&self, params: &[ParamBlock]) -> f64 {
        self.eval(&params[0].matrix, &self.all()).0
    }

    fn grad(&self, params: &[ParamBlock]) -> Vec<DenseMatrix> {
        vec![self.eval(&params[0].matrix, &self.all()).1]
    }

    fn loss_and_grad(&self, params: &[ParamBlock]) -> (f64, Vec<DenseMatrix>) {
        let (l, g) = self.eval(&params[0].matrix, &self.all());
        (l, vec![g])
    }

    fn n_samples(&self) -> usize {
        self.labels.len()
    }

    fn grad_subset(&self, params: &[ParamBlock], indices: &[usize]) -> Vec<DenseMatrix> {
        vec![self.eval(&params[0].matrix, indices).1]
    }

    fn smoothness(&self) -> Option<f64> {
        Some(self.smoothness)
    }
}
