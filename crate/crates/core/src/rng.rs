//! Seeded random sources. Every stochastic piece of the crate draws from a
//! `ChaCha8Rng` built here so that results depend only on the seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::matcore::DenseMatrix;

pub type SeededRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Matrix with i.i.d. standard normal entries.
pub fn gaussian_matrix(rows: usize, cols: usize, rng: &mut SeededRng) -> DenseMatrix {
    let data = (0..rows * cols).map(|_| StandardNormal.sample(rng)).collect();
    DenseMatrix::from_vec(rows, cols, data)
}

/// Convenience wrapper: Gaussian matrix from a fresh generator.
pub fn gaussian_matrix_seeded(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
    gaussian_matrix(rows, cols, &mut seeded(seed))
}

/// Mixes two seeds into one. Used to derive independent per-trial or
/// per-epoch streams from a base seed.
pub fn mix_seed(base: u64, salt: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = base ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
