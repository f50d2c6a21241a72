//! CSV and JSON file helpers shared by the subcommands.

use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::error::{HarnessError, Result};

/// 17 significant digits, enough to round-trip any f64.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| HarnessError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("value serializes");
    text.push('\n');
    write_file(path, text)
}

/// Writes `header` and `rows`, first keeping the rows of an existing file at
/// `path` whose leading `step` column is below `keep_below`. Resumed runs use
/// this to continue the files of the run they extend.
pub fn continue_csv(path: &Path, header: &str, keep_below: u64, rows: &str) -> Result<()> {
    let mut out = String::with_capacity(rows.len() + header.len() + 1);
    out.push_str(header);
    out.push('\n');
    if keep_below > 0 {
        if let Ok(existing) = fs::read_to_string(path) {
            let mut lines = existing.lines();
            if lines.next() == Some(header) {
                for line in lines {
                    let step = line.split(',').next().and_then(|s| s.parse::<u64>().ok());
                    if step.is_some_and(|s| s < keep_below) {
                        out.push_str(line);
                        out.push('\n');
                    }
                }
            }
        }
    }
    out.push_str(rows);
    write_file(path, out)
}
