//! Output-directory handling and `run_meta.json`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::CliError;

pub const RUN_META: &str = "run_meta.json";

pub fn sha256_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Regular files under `dir`, relative and sorted.
fn files_under(dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let mut stack = vec![PathBuf::new()];
    while let Some(rel) = stack.pop() {
        for entry in std::fs::read_dir(dir.join(&rel))? {
            let entry = entry?;
            let rel_child = rel.join(entry.file_name());
            if entry.file_type()?.is_dir() {
                stack.push(rel_child);
            } else {
                out.push(rel_child);
            }
        }
    }
    out.sort();
    Ok(out)
}

/// Checksum of a file, or of a directory as the hash of its sorted
/// `path:sha256` lines.
pub fn checksum(path: &Path) -> std::io::Result<String> {
    if path.is_dir() {
        let mut lines = String::new();
        for rel in files_under(path)? {
            let bytes = std::fs::read(path.join(&rel))?;
            lines += &format!("{}:{}\n", rel.to_string_lossy(), sha256_bytes(&bytes));
        }
        Ok(sha256_bytes(lines.as_bytes()))
    } else {
        Ok(sha256_bytes(&std::fs::read(path)?))
    }
}

/// Create `out`, refusing to reuse a non-empty directory.
pub fn prepare_out(out: &Path) -> Result<(), CliError> {
    if out.exists() {
        let non_empty = std::fs::read_dir(out)
            .map_err(|e| CliError::validation("output", format!("{}: {e}", out.display())))?
            .next()
            .is_some();
        if non_empty {
            return Err(CliError::validation("output", format!("{} exists and is not empty", out.display())));
        }
    }
    std::fs::create_dir_all(out).map_err(|e| CliError::runtime("output", format!("{}: {e}", out.display())))
}

#[derive(Serialize)]
struct RunMeta<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    config_sha256: String,
    seeds: BTreeMap<&'static str, u64>,
    inputs: BTreeMap<String, String>,
    artifacts: BTreeMap<String, String>,
}

/// Record the effective config hash, seeds and checksums of inputs and of
/// every file already written to `out`.
pub fn write_run_meta(out: &Path, command: &str, config: &RunConfig, inputs: &[&Path]) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::runtime("run_meta", e.to_string());
    let config_json = serde_json::to_string(config).map_err(|e| CliError::runtime("run_meta", e.to_string()))?;
    let mut input_sums = BTreeMap::new();
    for p in inputs {
        input_sums.insert(p.to_string_lossy().into_owned(), checksum(p).map_err(io)?);
    }
    let mut artifacts = BTreeMap::new();
    for rel in files_under(out).map_err(io)? {
        if rel.as_os_str() == RUN_META {
            continue;
        }
        let sum = sha256_bytes(&std::fs::read(out.join(&rel)).map_err(io)?);
        artifacts.insert(rel.to_string_lossy().into_owned(), sum);
    }
    let meta = RunMeta {
        tool: "ppg",
        version: env!("CARGO_PKG_VERSION"),
        command,
        config_sha256: sha256_bytes(config_json.as_bytes()),
        seeds: config.seeds(),
        inputs: input_sums,
        artifacts,
    };
    let text = serde_json::to_string_pretty(&meta).map_err(|e| CliError::runtime("run_meta", e.to_string()))?;
    std::fs::write(out.join(RUN_META), text + "\n").map_err(io)
}
