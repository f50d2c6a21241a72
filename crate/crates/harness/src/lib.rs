//! Experiment harness for `olion-core`: configuration, the training loop,
//! checkpoints, learning-rate sweeps, distribution dumps and the CLI.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod dist;
pub mod error;
pub mod lab;
pub mod output;
pub mod sweep;
pub mod train;
pub mod verify;

pub use checkpoint::Checkpoint;
pub use config::{BatchMode, PolarChoice, RunConfig, SweepConfig};
pub use error::{HarnessError, Result};
pub use train::{resume, resume_with, run, RunSummary};
