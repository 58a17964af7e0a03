//! Content-hash stamps that decide whether a stage can be skipped.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{PipelineError, Result, Stage};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| PipelineError::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

/// Accumulates labelled inputs into one digest.
pub struct StampHasher {
    hasher: Sha256,
}

impl StampHasher {
    pub fn new(stage: Stage) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(b"c3v-stage-v1\0");
        hasher.update(stage.as_str().as_bytes());
        Self { hasher }
    }

    fn field(&mut self, label: &str, bytes: &[u8]) {
        self.hasher.update((label.len() as u64).to_le_bytes());
        self.hasher.update(label.as_bytes());
        self.hasher.update((bytes.len() as u64).to_le_bytes());
        self.hasher.update(bytes);
    }

    pub fn text(&mut self, label: &str, value: &str) -> &mut Self {
        self.field(label, value.as_bytes());
        self
    }

    pub fn json<T: Serialize>(&mut self, label: &str, value: &T) -> &mut Self {
        let bytes = serde_json::to_vec(value).expect("stamp inputs serialize");
        self.field(label, &bytes);
        self
    }

    /// Hashes the file's content; a missing file is a missing input of `needs`.
    pub fn file(&mut self, label: &str, path: &Path, needs: Stage) -> Result<&mut Self> {
        let bytes = std::fs::read(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => PipelineError::MissingInput {
                path: path.to_path_buf(),
                needs,
            },
            _ => PipelineError::io(path, e),
        })?;
        self.field(label, Sha256::digest(&bytes).as_slice());
        Ok(self)
    }

    pub fn finish(self) -> String {
        hex::encode(self.hasher.finalize())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageStamp {
    pub stage: Stage,
    pub stamp: String,
    /// Output files relative to the output directory.
    pub outputs: Vec<String>,
}

impl StageStamp {
    pub fn path(out_dir: &Path, stage: Stage) -> PathBuf {
        out_dir.join("stamps").join(format!("{stage}.json"))
    }

    pub fn read(out_dir: &Path, stage: Stage) -> Option<Self> {
        let text = std::fs::read(Self::path(out_dir, stage)).ok()?;
        serde_json::from_slice(&text).ok()
    }

    pub fn write(&self, out_dir: &Path) -> Result<()> {
        let path = Self::path(out_dir, self.stage);
        write_file(&path, &serde_json::to_vec_pretty(self).expect("stamps serialize"))
    }

    /// True when the stamp matches and every recorded output still exists.
    pub fn is_current(&self, out_dir: &Path, stamp: &str) -> bool {
        self.stamp == stamp && self.outputs.iter().all(|o| out_dir.join(o).is_file())
    }
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| PipelineError::io(path, e))
}
