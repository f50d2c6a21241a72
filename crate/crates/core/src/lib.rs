//! Matrix optimizers built around the sign-after-orthogonalization update.
//!
//! The crate is organised bottom-up:
//!
//! - [`matcore`]: dense matrices, thin SVD, polar factor, Newton–Schulz.
//! - [`geometry`]: the spectral and ℓ∞ constraint sets and the composed direction.
//! - [`optimizers`]: OLion, Lion, Muon, signSGD and AdamW step rules plus LR schedules.
//! - [`diagnostics`]: diagonal isotropy ε, the cancellation-aware bound, Φ and descent audits.
//! - [`theory_lab`]: Monte-Carlo study of ε for Haar-random singular vectors.
//! - [`problems`]: small differentiable objectives and a finite-difference checker.

pub mod diagnostics;
pub mod error;
pub mod geometry;
pub mod matcore;
pub mod optimizers;
pub mod problems;
pub mod rng;
pub mod theory_lab;

pub use error::{Error, Result};
pub use matcore::DenseMatrix;
