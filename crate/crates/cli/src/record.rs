use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const RUNS_FILE: &str = "runs.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub command: String,
    pub config_hash: String,
    pub started: String,
    pub finished: String,
    pub outputs: Vec<PathBuf>,
    pub exit_code: i32,
    pub version: String,
}

/// SHA-256 of the canonical JSON of the configuration.
///
/// `serde_json::Value` keeps object keys sorted, so equal configurations hash
/// equally regardless of field order.
pub fn config_hash(config: &serde_json::Value) -> String {
    let canonical = serde_json::to_string(config).expect("values always serialize");
    hex::encode(Sha256::digest(canonical.as_bytes()))
}

/// Append one line to `runs.jsonl` in `dir`.
pub fn append(dir: &Path, record: &RunRecord) -> std::io::Result<()> {
    let mut f = OpenOptions::new().create(true).append(true).open(dir.join(RUNS_FILE))?;
    let line = serde_json::to_string(record).expect("records always serialize");
    writeln!(f, "{line}")
}
