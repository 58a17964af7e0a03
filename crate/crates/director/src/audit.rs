//! Append-only NDJSON log of every exchange with the director.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{DirectorError, Result};
use crate::protocol::{DirectorRequest, Task};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub seq: u64,
    pub timestamp_ms: u128,
    pub transport: String,
    pub task: Task,
    pub prompt: String,
    pub attempt: u32,
    pub instruction: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_sha256: Option<String>,
    #[serde(default)]
    pub context: Value,
    /// Answer text exactly as received.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl AuditRecord {
    pub fn for_request(request: &DirectorRequest, transport: &str, attempt: u32) -> Self {
        Self {
            seq: 0,
            timestamp_ms: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0),
            transport: transport.to_string(),
            task: request.task,
            prompt: request.prompt.clone(),
            attempt,
            instruction: request.instruction.clone(),
            image_sha256: request.image_png.as_ref().map(|b| hex::encode(Sha256::digest(b.as_bytes()))),
            context: request.context.clone(),
            response: None,
            error: None,
        }
    }
}

struct Inner {
    file: File,
    next_seq: u64,
}

pub struct AuditLog {
    path: PathBuf,
    inner: Mutex<Inner>,
}

impl AuditLog {
    /// Opens for appending; sequence numbers continue after existing records.
    pub fn open(path: impl Into<PathBuf>) -> Result<Self> {
        let path = path.into();
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| DirectorError::io(dir, e))?;
        }
        let next_seq = if path.exists() {
            read_records(&path)?.last().map(|r| r.seq + 1).unwrap_or(0)
        } else {
            0
        };
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| DirectorError::io(&path, e))?;
        Ok(Self {
            path,
            inner: Mutex::new(Inner { file, next_seq }),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Assigns the next sequence number, writes and flushes; returns the number.
    pub fn append(&self, mut record: AuditRecord) -> Result<u64> {
        let mut inner = self.inner.lock().expect("audit lock");
        record.seq = inner.next_seq;
        let mut line = serde_json::to_string(&record).expect("audit records serialize");
        line.push('\n');
        inner
            .file
            .write_all(line.as_bytes())
            .and_then(|_| inner.file.flush())
            .map_err(|e| DirectorError::io(&self.path, e))?;
        inner.next_seq += 1;
        Ok(record.seq)
    }
}

pub fn read_records(path: &Path) -> Result<Vec<AuditRecord>> {
    let file = File::open(path).map_err(|e| DirectorError::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| DirectorError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line)
            .map_err(|e| DirectorError::Config(format!("{}:{}: bad audit record: {e}", path.display(), n + 1)))?;
        out.push(rec);
    }
    Ok(out)
}
