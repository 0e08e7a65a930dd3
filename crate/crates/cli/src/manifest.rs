//! Per-stage output manifests: enough provenance to reproduce a run and to
//! detect mismatched artifact chains.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use sha2::{Digest, Sha256};

use zrtopic_core::util::sha256_file;

pub const MANIFEST_NAME: &str = "manifest.json";

/// Content hash of a file for provenance records. A corpus manifest hashes
/// as the digest of its own bytes plus every referenced feature file, so two
/// corpora with identical layouts but different features never collide.
pub fn artifact_hash(path: &Path) -> Result<String> {
    if path.file_name().and_then(|n| n.to_str()) != Some("corpus.json") {
        return Ok(sha256_file(path)?);
    }
    let bytes = std::fs::read(path)
        .with_context(|| format!("cannot read corpus manifest {}", path.display()))?;
    let value: serde_json::Value = serde_json::from_slice(&bytes)?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    let base = path.parent().unwrap_or(Path::new("."));
    if let Some(docs) = value.get("documents").and_then(|d| d.as_array()) {
        for doc in docs {
            if let Some(utts) = doc.get("utterances").and_then(|u| u.as_array()) {
                for utt in utts {
                    if let Some(rel) = utt.as_str() {
                        let fpath = base.join(rel);
                        let fbytes = std::fs::read(&fpath).with_context(|| {
                            format!("cannot read feature file {}", fpath.display())
                        })?;
                        hasher.update(rel.as_bytes());
                        hasher.update(&fbytes);
                    }
                }
            }
        }
    }
    Ok(hex::encode(hasher.finalize()))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FileRecord {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: String,
    pub tool_version: String,
    pub root_seed: u64,
    pub config_hash: String,
    /// The effective run configuration (after seed expansion), embedded so
    /// an output directory alone suffices to reproduce the run.
    pub config: serde_json::Value,
    /// Inputs by role name (corpus, units, model, ...).
    pub inputs: BTreeMap<String, FileRecord>,
    /// Outputs by role name.
    pub outputs: BTreeMap<String, FileRecord>,
}

impl Manifest {
    pub fn new(stage: &str, loaded: &crate::config::LoadedConfig) -> Self {
        Self {
            stage: stage.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            root_seed: loaded.config.root_seed,
            config_hash: loaded.config_hash.clone(),
            config: serde_json::to_value(&loaded.config).expect("config serializes"),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        }
    }

    pub fn add_input(&mut self, role: &str, path: &Path) -> Result<()> {
        let sha256 = artifact_hash(path)
            .with_context(|| format!("cannot hash input {}", path.display()))?;
        self.inputs.insert(
            role.to_string(),
            FileRecord {
                path: path.display().to_string(),
                sha256,
            },
        );
        Ok(())
    }

    pub fn add_output(&mut self, role: &str, path: &Path) -> Result<()> {
        let sha256 = sha256_file(path)
            .with_context(|| format!("cannot hash output {}", path.display()))?;
        self.outputs.insert(
            role.to_string(),
            FileRecord {
                path: path.display().to_string(),
                sha256,
            },
        );
        Ok(())
    }

    pub fn write(&self, out_dir: &Path) -> Result<()> {
        let path = out_dir.join(MANIFEST_NAME);
        let mut bytes = serde_json::to_vec_pretty(self)?;
        bytes.push(b'\n');
        std::fs::write(&path, bytes)
            .with_context(|| format!("cannot write {}", path.display()))?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_NAME);
        let bytes = std::fs::read(&path)
            .with_context(|| format!("cannot read {}", path.display()))?;
        Ok(serde_json::from_slice(&bytes)?)
    }
}

/// Check that the artifact's producing stage recorded `role` with the same
/// content hash as `current`: i.e. both stages really saw the same file.
/// Missing manifests are tolerated (hand-built inputs); recorded mismatches
/// are not.
pub fn verify_chain(artifact: &Path, role: &str, current: &Path) -> Result<()> {
    let Some(dir) = artifact.parent() else {
        return Ok(());
    };
    if !dir.join(MANIFEST_NAME).exists() {
        return Ok(());
    }
    let manifest = Manifest::load(dir)?;
    let Some(recorded) = manifest.inputs.get(role) else {
        return Ok(());
    };
    let current_hash = artifact_hash(current)
        .with_context(|| format!("cannot hash {}", current.display()))?;
    if recorded.sha256 != current_hash {
        bail!(
            "artifact mismatch: {} was produced from {role} {} (sha256 {}), but the {role} supplied now is {} (sha256 {current_hash})",
            artifact.display(),
            recorded.path,
            recorded.sha256,
            current.display(),
        );
    }
    Ok(())
}
