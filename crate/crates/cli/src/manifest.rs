//! Per-output run manifests: what ran, on what, producing what.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    /// Everything needed to repeat the run, inputs as given.
    pub config: serde_json::Value,
    pub seeds: Vec<u64>,
    /// Input path → SHA-256.
    pub inputs: BTreeMap<String, String>,
    /// Artifact path relative to the output → SHA-256.
    pub artifacts: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn new(command: &'static str, config: serde_json::Value, seeds: Vec<u64>) -> Self {
        RunManifest {
            tool: "perfid",
            version: env!("CARGO_PKG_VERSION"),
            command,
            config,
            seeds,
            inputs: BTreeMap::new(),
            artifacts: BTreeMap::new(),
        }
    }

    pub fn input(&mut self, label: impl Into<String>, path: &Path) -> Result<()> {
        self.inputs.insert(label.into(), hash_file(path)?);
        Ok(())
    }
}

pub fn hash_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn hash_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hash_bytes(&bytes))
}

/// Every file under `dir` except the manifest, sorted, with `/` separators.
pub fn list_artifacts(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in walkdir::WalkDir::new(dir).sort_by_file_name() {
        let entry = entry.with_context(|| format!("listing {}", dir.display()))?;
        if entry.file_type().is_file() {
            let rel = entry.path().strip_prefix(dir).expect("walk stays under its root").to_path_buf();
            if rel != Path::new(MANIFEST) {
                out.push(rel);
            }
        }
    }
    Ok(out)
}

fn slash(p: &Path) -> String {
    p.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/")
}

fn render(m: &RunManifest) -> String {
    serde_json::to_string_pretty(m).expect("manifest serializes") + "\n"
}

/// Hashes the artifacts of a directory output and writes its manifest.
pub fn finish_dir(mut m: RunManifest, dir: &Path) -> Result<()> {
    for rel in list_artifacts(dir)? {
        m.artifacts.insert(slash(&rel), hash_file(&dir.join(&rel))?);
    }
    let path = dir.join(MANIFEST);
    std::fs::write(&path, render(&m)).with_context(|| format!("writing {}", path.display()))
}

/// Manifest path for a single-file output: `<file>.manifest.json`.
pub fn sidecar_path(file: &Path) -> PathBuf {
    let mut name = file.file_name().unwrap_or_default().to_os_string();
    name.push(".");
    name.push(MANIFEST);
    file.with_file_name(name)
}

/// Hashes a single-file output and writes its sibling manifest.
pub fn finish_file(mut m: RunManifest, file: &Path) -> Result<()> {
    let name = file.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    m.artifacts.insert(name, hash_file(file)?);
    let path = sidecar_path(file);
    std::fs::write(&path, render(&m)).with_context(|| format!("writing {}", path.display()))
}
