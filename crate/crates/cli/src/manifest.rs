//! Run manifest: inputs, seeds and a SHA-256 for every produced file.
//! Wall-clock timings live in a separate file that is never hashed.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const TIMINGS_FILE: &str = "timings.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    /// File name of the config, if one was given.
    pub config_file: Option<String>,
    pub config_sha256: Option<String>,
    /// Effective configuration after command-line overrides.
    pub config: serde_json::Value,
    pub seed: u64,
    pub models: Vec<String>,
    pub commands: Vec<String>,
    /// Relative path (forward slashes) to content hash.
    pub files: BTreeMap<String, String>,
    pub unhashed: Vec<String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn hash_file(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path.display().to_string(), e))?;
    Ok(sha256_hex(&bytes))
}

fn collect(dir: &Path, root: &Path, out: &mut Vec<PathBuf>) -> Result<(), CliError> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::io(dir.display().to_string(), e))?;
    for entry in entries {
        let entry = entry.map_err(|e| CliError::io(dir.display().to_string(), e))?;
        let path = entry.path();
        if path.is_dir() {
            collect(&path, root, out)?;
        } else {
            out.push(path.strip_prefix(root).unwrap_or(&path).to_path_buf());
        }
    }
    Ok(())
}

/// Hashes of every file under `out_dir` except the manifest and timings.
pub fn hash_outputs(out_dir: &Path) -> Result<BTreeMap<String, String>, CliError> {
    let mut files = Vec::new();
    collect(out_dir, out_dir, &mut files)?;
    let mut map = BTreeMap::new();
    for rel in files {
        let key = rel
            .components()
            .map(|c| c.as_os_str().to_string_lossy().into_owned())
            .collect::<Vec<_>>()
            .join("/");
        if key == MANIFEST_FILE || key == TIMINGS_FILE {
            continue;
        }
        map.insert(key, hash_file(&out_dir.join(&rel))?);
    }
    Ok(map)
}

pub fn load_manifest(out_dir: &Path) -> Option<RunManifest> {
    let text = fs::read(out_dir.join(MANIFEST_FILE)).ok()?;
    serde_json::from_slice(&text).ok()
}

pub fn write_json_file<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    fs::write(path, bytes).map_err(|e| CliError::io(path.display().to_string(), e))
}

/// Merges `section` into the timings file under `key`.
pub fn record_timing(
    out_dir: &Path,
    key: &str,
    section: serde_json::Value,
) -> Result<(), CliError> {
    let path = out_dir.join(TIMINGS_FILE);
    let mut root = fs::read(&path)
        .ok()
        .and_then(|b| serde_json::from_slice::<serde_json::Value>(&b).ok())
        .filter(serde_json::Value::is_object)
        .unwrap_or_else(|| serde_json::json!({}));
    root[key] = section;
    write_json_file(&path, &root)
}
