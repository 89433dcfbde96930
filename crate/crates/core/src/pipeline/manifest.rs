use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::Stage;
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    /// Relative to the output root, or absolute for raw inputs.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub docs_in: u64,
    pub docs_out: u64,
    pub tokens_in: u64,
    pub tokens_out: u64,
}

impl Counts {
    pub fn add(&mut self, other: &Counts) {
        self.docs_in += other.docs_in;
        self.docs_out += other.docs_out;
        self.tokens_in += other.tokens_in;
        self.tokens_out += other.tokens_out;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    /// Digest of the configuration the stage ran under.
    pub config_digest: String,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub counts: Counts,
    pub per_dataset: BTreeMap<String, Counts>,
    pub completed_unix: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: serde_json::Value,
    pub stages: BTreeMap<Stage, StageRecord>,
}

pub fn sha256_file(path: &Path) -> Result<FileDigest> {
    let bytes = fs::read(path).map_err(|e| Error::io("digesting", path, e))?;
    Ok(FileDigest {
        path: path.to_string_lossy().into_owned(),
        sha256: hex::encode(Sha256::digest(&bytes)),
        bytes: bytes.len() as u64,
    })
}

pub fn sha256_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Digests every file below `dir`, with paths relative to `root`, sorted.
pub fn digest_tree(root: &Path, dir: &Path) -> Result<Vec<FileDigest>> {
    let mut files = Vec::new();
    collect_files(dir, &mut files)?;
    files.sort();
    files
        .iter()
        .map(|f| {
            let mut d = sha256_file(f)?;
            d.path = relative(root, f);
            Ok(d)
        })
        .collect()
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in fs::read_dir(dir).map_err(|e| Error::io("listing", dir, e))? {
        let p = entry.map_err(|e| Error::io("listing", dir, e))?.path();
        if p.is_dir() {
            collect_files(&p, out)?;
        } else {
            out.push(p);
        }
    }
    Ok(())
}

fn relative(root: &Path, p: &Path) -> String {
    p.strip_prefix(root)
        .unwrap_or(p)
        .to_string_lossy()
        .replace('\\', "/")
}

impl RunManifest {
    pub fn load_or_default(root: &Path) -> Result<Self> {
        let path = root.join(MANIFEST_FILE);
        if !path.exists() {
            return Ok(RunManifest::default());
        }
        let raw = fs::read_to_string(&path).map_err(|e| Error::io("reading", &path, e))?;
        serde_json::from_str(&raw)
            .map_err(|e| Error::resume(format!("manifest {} is unreadable: {e}", path.display())))
    }

    pub fn save(&self, root: &Path) -> Result<()> {
        let json = serde_json::to_vec_pretty(self).map_err(|e| Error::data(e.to_string()))?;
        write_atomic(&root.join(MANIFEST_FILE), &json)
    }

    /// Checks that every output recorded for `stage` is on disk unchanged.
    pub fn verify_outputs(&self, root: &Path, stage: Stage) -> Result<&StageRecord> {
        let rec = self.stages.get(&stage).ok_or_else(|| {
            Error::resume(format!("stage {stage} has not completed; run it first"))
        })?;
        for f in &rec.outputs {
            let path = root.join(&f.path);
            let ok = path.exists() && sha256_file(&path)?.sha256 == f.sha256;
            if !ok {
                return Err(Error::resume(format!(
                    "output {} of stage {stage} is missing or modified; re-run stage {stage}",
                    f.path
                )));
            }
        }
        Ok(rec)
    }
}

/// Writes `bytes` to a sibling temp file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| Error::io("writing", &tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io("renaming", path, e))
}
