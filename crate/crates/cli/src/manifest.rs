//! Artifact directory bookkeeping.
//!
//! Every command writes its files through an [`ArtifactDir`], which hashes
//! each payload and finally emits `manifest.json`. Manifests carry no
//! timestamps or absolute paths, so identical runs produce identical bytes.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub master_seed: Option<u64>,
    pub stage_seeds: BTreeMap<String, u64>,
    pub inputs: Vec<FileEntry>,
    pub artifacts: Vec<FileEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hash of an input file, recorded under the path as given.
pub fn input_entry(path: &Path) -> Result<FileEntry> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(FileEntry {
        path: path.display().to_string(),
        bytes: bytes.len() as u64,
        sha256: sha256_hex(&bytes),
    })
}

pub struct ArtifactDir {
    root: PathBuf,
    command: String,
    master_seed: Option<u64>,
    stage_seeds: BTreeMap<String, u64>,
    inputs: Vec<FileEntry>,
    artifacts: Vec<FileEntry>,
}

impl ArtifactDir {
    pub fn create(root: impl Into<PathBuf>, command: impl Into<String>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|e| CliError::io(&root, e))?;
        Ok(Self {
            root,
            command: command.into(),
            master_seed: None,
            stage_seeds: BTreeMap::new(),
            inputs: Vec::new(),
            artifacts: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn seed(&mut self, master: u64) {
        self.master_seed = Some(master);
    }

    pub fn stage_seed(&mut self, stage: &str, seed: u64) {
        self.stage_seeds.insert(stage.to_string(), seed);
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        self.inputs.push(input_entry(path)?);
        Ok(())
    }

    /// Writes `bytes` to `rel` under the root and records its hash.
    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
        fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        self.artifacts.retain(|a| a.path != rel);
        self.artifacts.push(FileEntry {
            path: rel.to_string(),
            bytes: bytes.len() as u64,
            sha256: sha256_hex(bytes),
        });
        Ok(path)
    }

    /// Renders with a library writer into memory, then writes.
    pub fn write_with<F>(&mut self, rel: &str, stage: &'static str, render: F) -> Result<PathBuf>
    where
        F: FnOnce(&mut Vec<u8>) -> rtn_trng::Result<()>,
    {
        let mut buf = Vec::new();
        render(&mut buf).map_err(|source| CliError::Stage { stage, source })?;
        self.write(rel, &buf)
    }

    pub fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(value).expect("reports serialize to JSON");
        text.push('\n');
        self.write(rel, text.as_bytes())
    }

    pub fn write_csv(&mut self, rel: &str, header: &str, rows: impl IntoIterator<Item = String>) -> Result<PathBuf> {
        let mut buf = Vec::new();
        writeln!(buf, "{header}").expect("write to memory");
        for row in rows {
            writeln!(buf, "{row}").expect("write to memory");
        }
        self.write(rel, &buf)
    }

    /// Writes `manifest.json` with artifacts sorted by path.
    pub fn finish(mut self) -> Result<PathBuf> {
        self.artifacts.sort_by(|a, b| a.path.cmp(&b.path));
        let manifest = Manifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: self.command.clone(),
            master_seed: self.master_seed,
            stage_seeds: std::mem::take(&mut self.stage_seeds),
            inputs: std::mem::take(&mut self.inputs),
            artifacts: std::mem::take(&mut self.artifacts),
        };
        let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        text.push('\n');
        let path = self.root.join(MANIFEST_NAME);
        fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST_NAME);
    let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::ConfigFile {
        path,
        message: e.to_string(),
    })
}

/// Re-hashes every artifact listed in `dir/manifest.json`. Returns the
/// paths whose size or hash no longer match.
pub fn verify(dir: &Path) -> Result<Vec<String>> {
    let manifest = read_manifest(dir)?;
    let mut bad = Vec::new();
    for a in &manifest.artifacts {
        match fs::read(dir.join(&a.path)) {
            Ok(bytes) if bytes.len() as u64 == a.bytes && sha256_hex(&bytes) == a.sha256 => {}
            _ => bad.push(a.path.clone()),
        }
    }
    Ok(bad)
}
