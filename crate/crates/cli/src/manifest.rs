use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::sha256_hex;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub records: Option<usize>,
}

impl FileDigest {
    pub fn of(path: &Path, records: Option<usize>) -> std::io::Result<Self> {
        Ok(FileDigest {
            path: path.to_path_buf(),
            sha256: sha256_hex(&std::fs::read(path)?),
            records,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    Failed,
}

/// Sidecar written next to a command's primary output. No timestamps, so
/// replaying the same inputs against mock backends reproduces it exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub forge_version: String,
    pub config_path: Option<PathBuf>,
    pub config_sha256: String,
    pub seed: Option<u64>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub counts: BTreeMap<String, usize>,
    pub status: RunStatus,
    pub error: Option<String>,
}

pub fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    out.with_file_name(name)
}

/// Sibling file sharing the output's name, e.g. `out.jsonl` → `out.rejections.jsonl`.
pub fn sibling(out: &Path, tag: &str) -> PathBuf {
    let stem = out.file_stem().unwrap_or_default().to_string_lossy();
    let ext = out
        .extension()
        .map(|e| format!(".{}", e.to_string_lossy()))
        .unwrap_or_default();
    out.with_file_name(format!("{stem}.{tag}{ext}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sidecar_names() {
        assert_eq!(
            manifest_path(Path::new("a/t.jsonl")),
            Path::new("a/t.jsonl.manifest.json")
        );
        assert_eq!(
            sibling(Path::new("a/t.jsonl"), "rejections"),
            Path::new("a/t.rejections.jsonl")
        );
        assert_eq!(sibling(Path::new("plain"), "drops"), Path::new("plain.drops"));
    }
}
