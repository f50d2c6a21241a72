//! Singular-value and entry-magnitude distributions of checkpointed blocks.

use std::path::{Path, PathBuf};

use olion_core::matcore::{singular_values, DenseMatrix};
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::error::{HarnessError, Result};
use crate::output::{fmt_f64, write_file};

pub const HIST_BINS: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockDistribution {
    pub name: String,
    /// Non-increasing.
    pub singular_values: Vec<f64>,
    /// `HIST_BINS + 1` edges from 0 to `max |x_ij|` (or 1 for a zero block).
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

/// Histogram of `|m_ij|` over `HIST_BINS` equal bins. The last bin is closed,
/// so the largest entry lands in it.
pub fn abs_histogram(m: &DenseMatrix) -> (Vec<f64>, Vec<u64>) {
    let max = m.linf_norm();
    let hi = if max > 0.0 { max } else { 1.0 };
    let edges: Vec<f64> = (0..=HIST_BINS).map(|i| hi * i as f64 / HIST_BINS as f64).collect();
    let mut counts = vec![0u64; HIST_BINS];
    for &x in m.as_slice() {
        let bin = ((x.abs() / hi) * HIST_BINS as f64) as usize;
        counts[bin.min(HIST_BINS - 1)] += 1;
    }
    (edges, counts)
}

pub fn block_distribution(name: &str, m: &DenseMatrix) -> BlockDistribution {
    let (edges, counts) = abs_histogram(m);
    BlockDistribution {
        name: name.to_string(),
        singular_values: singular_values(m),
        edges,
        counts,
    }
}

/// Distributions of the named blocks, in the order given. An empty list
/// selects every block.
pub fn dump_distributions(checkpoint: &Path, block_names: &[String]) -> Result<Vec<BlockDistribution>> {
    let ckpt = Checkpoint::load(checkpoint)?;
    if block_names.is_empty() {
        return Ok(ckpt
            .blocks
            .iter()
            .map(|b| block_distribution(&b.name, &b.matrix))
            .collect());
    }
    block_names
        .iter()
        .map(|name| {
            ckpt.blocks
                .iter()
                .find(|b| &b.name == name)
                .map(|b| block_distribution(name, &b.matrix))
                .ok_or_else(|| HarnessError::UnknownBlock(name.clone()))
        })
        .collect()
}

/// Writes `<block>_singular_values.csv` and `<block>_abs_hist.csv` per block.
pub fn write_distributions(out_dir: &Path, dists: &[BlockDistribution]) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for d in dists {
        let mut sv = String::from("index,sigma\n");
        for (i, s) in d.singular_values.iter().enumerate() {
            sv.push_str(&format!("{i},{}\n", fmt_f64(*s)));
        }
        let sv_path = out_dir.join(format!("{}_singular_values.csv", d.name));
        write_file(&sv_path, sv)?;

        let mut hist = String::from("bin,lower,upper,count\n");
        for (i, c) in d.counts.iter().enumerate() {
            hist.push_str(&format!(
                "{i},{},{},{c}\n",
                fmt_f64(d.edges[i]),
                fmt_f64(d.edges[i + 1])
            ));
        }
        let hist_path = out_dir.join(format!("{}_abs_hist.csv", d.name));
        write_file(&hist_path, hist)?;
        written.extend([sv_path, hist_path]);
    }
    Ok(written)
}
