//! On-disk checkpoints: `manifest.json` plus a little-endian f64 `payload.bin`.
//!
//! The payload stores, for each block in order, the parameter matrix, the
//! momentum buffer and (if present) the second moment, all row-major. The
//! manifest records element offsets into the payload and its SHA-256.

use std::fs;
use std::path::{Path, PathBuf};

use olion_core::matcore::DenseMatrix;
use olion_core::optimizers::{BlockState, ParamBlock, ParamKind};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::{HarnessError, Result};

pub const CHECKPOINT_VERSION: u64 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const PAYLOAD_FILE: &str = "payload.bin";

/// Training state after `step` completed steps.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub step: u64,
    pub config: RunConfig,
    pub blocks: Vec<ParamBlock>,
    pub states: Vec<BlockState>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct BlockEntry {
    name: String,
    kind: ParamKind,
    rows: usize,
    cols: usize,
    step_count: u64,
    /// Offsets are in f64 elements, not bytes.
    param_offset: usize,
    momentum_offset: usize,
    second_moment_offset: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    version: u64,
    step: u64,
    config: RunConfig,
    blocks: Vec<BlockEntry>,
    payload_len: usize,
    payload_sha256: String,
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Directory name for a checkpoint after `step` steps.
pub fn checkpoint_dir_name(step: u64) -> String {
    format!("step_{step:06}")
}

impl Checkpoint {
    /// Serialized `(manifest, payload)` bytes.
    pub fn to_bytes(&self) -> (Vec<u8>, Vec<u8>) {
        let mut payload: Vec<f64> = Vec::new();
        let mut push = |m: &DenseMatrix| {
            let at = payload.len();
            payload.extend_from_slice(m.as_slice());
            at
        };
        let blocks = self
            .blocks
            .iter()
            .zip(&self.states)
            .map(|(b, s)| BlockEntry {
                name: b.name.clone(),
                kind: b.kind,
                rows: b.matrix.rows(),
                cols: b.matrix.cols(),
                step_count: s.step_count,
                param_offset: push(&b.matrix),
                momentum_offset: push(&s.momentum),
                second_moment_offset: s.second_moment.as_ref().map(&mut push),
            })
            .collect();
        let bytes: Vec<u8> = payload.iter().flat_map(|x| x.to_le_bytes()).collect();
        let manifest = Manifest {
            version: CHECKPOINT_VERSION,
            step: self.step,
            config: self.config.clone(),
            blocks,
            payload_len: bytes.len(),
            payload_sha256: sha256_hex(&bytes),
        };
        let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        text.push('\n');
        (text.into_bytes(), bytes)
    }

    /// Parses manifest and payload bytes, checking version and checksum.
    pub fn from_bytes(manifest: &[u8], payload: &[u8]) -> Result<Self> {
        let corrupt = |msg: String| HarnessError::CorruptCheckpoint(msg);
        let doc: Value = serde_json::from_slice(manifest).map_err(|e| corrupt(format!("manifest: {e}")))?;
        let version = doc
            .get("version")
            .and_then(Value::as_u64)
            .ok_or_else(|| corrupt("manifest has no version".into()))?;
        if version != CHECKPOINT_VERSION {
            return Err(HarnessError::VersionMismatch {
                found: version,
                expected: CHECKPOINT_VERSION,
            });
        }
        let m: Manifest = serde_json::from_value(doc).map_err(|e| corrupt(format!("manifest: {e}")))?;
        if payload.len() != m.payload_len {
            return Err(corrupt(format!(
                "payload is {} bytes, manifest says {}",
                payload.len(),
                m.payload_len
            )));
        }
        if sha256_hex(payload) != m.payload_sha256 {
            return Err(corrupt("payload checksum mismatch".into()));
        }
        if !payload.len().is_multiple_of(8) {
            return Err(corrupt("payload length is not a multiple of 8".into()));
        }
        let data: Vec<f64> = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        let read = |offset: usize, rows: usize, cols: usize| -> Result<DenseMatrix> {
            let end = offset
                .checked_add(rows * cols)
                .filter(|&e| e <= data.len())
                .ok_or_else(|| corrupt(format!("block range {offset}+{} out of bounds", rows * cols)))?;
            DenseMatrix::new(rows, cols, data[offset..end].to_vec()).map_err(|e| corrupt(e.to_string()))
        };
        let mut blocks = Vec::with_capacity(m.blocks.len());
        let mut states = Vec::with_capacity(m.blocks.len());
        for e in &m.blocks {
            let matrix = read(e.param_offset, e.rows, e.cols)?;
            blocks.push(ParamBlock::new(e.name.clone(), matrix, e.kind).map_err(|e| corrupt(e.to_string()))?);
            states.push(BlockState {
                momentum: read(e.momentum_offset, e.rows, e.cols)?,
                second_moment: e.second_moment_offset.map(|o| read(o, e.rows, e.cols)).transpose()?,
                step_count: e.step_count,
            });
        }
        Ok(Self {
            step: m.step,
            config: m.config,
            blocks,
            states,
        })
    }

    /// Writes `<root>/step_XXXXXX/` and returns that directory.
    pub fn save(&self, root: &Path) -> Result<PathBuf> {
        let dir = root.join(checkpoint_dir_name(self.step));
        fs::create_dir_all(&dir).map_err(|e| HarnessError::io(&dir, e))?;
        let (manifest, payload) = self.to_bytes();
        // Payload first, so a manifest never points at a missing payload.
        let p = dir.join(PAYLOAD_FILE);
        fs::write(&p, payload).map_err(|e| HarnessError::io(&p, e))?;
        let m = dir.join(MANIFEST_FILE);
        fs::write(&m, manifest).map_err(|e| HarnessError::io(&m, e))?;
        Ok(dir)
    }

    /// Loads from a checkpoint directory or its `manifest.json`.
    pub fn load(path: &Path) -> Result<Self> {
        let dir = if path.is_dir() {
            path
        } else {
            path.parent().unwrap_or(Path::new("."))
        };
        let m = dir.join(MANIFEST_FILE);
        let p = dir.join(PAYLOAD_FILE);
        let manifest = fs::read(&m).map_err(|e| HarnessError::io(&m, e))?;
        let payload = fs::read(&p).map_err(|e| HarnessError::io(&p, e))?;
        Self::from_bytes(&manifest, &payload)
    }
}
