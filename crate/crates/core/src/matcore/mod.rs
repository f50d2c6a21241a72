//! Dense-matrix arithmetic, norms, thin SVD, exact polar factor, and the
//! Newton–Schulz orthogonalizer. Everything here is a pure function.

mod dense;
mod norms;
mod orth;
mod svd;

pub use dense::DenseMatrix;
pub use norms::{frobenius_norm, norm_suite, NormSuite};
pub use orth::{newton_schulz, newton_schulz_with, polar_factor_exact, sign_map, NsCoefficients, NS_NORM_EPS};
pub use svd::{qr_thin, qr_thin_positive, singular_values, thin_svd, ThinSvd, DEFAULT_RANK_TOL, ZERO_FLOOR};
