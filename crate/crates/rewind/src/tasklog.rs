//! Append-only task transaction log (`tasklog.jsonl`), one entry per line.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use rewind_core::Digest;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputRecord {
    pub path: String,
    pub digest: Digest,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogEntry {
    pub fingerprint: Digest,
    pub task_id: String,
    pub kind: String,
    pub outputs: Vec<OutputRecord>,
    /// Encoded return value of a function task.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<Digest>,
    pub wall_time_ms: u64,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
}

impl LogEntry {
    /// Task cache blobs this entry needs.
    pub fn blobs(&self) -> impl Iterator<Item = &Digest> {
        self.outputs.iter().map(|o| &o.digest).chain(self.result.iter())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum LogError {
    #[error("task log I/O error at {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

/// The log plus a fingerprint index where the latest entry wins.
#[derive(Debug, Default)]
pub struct TransactionLog {
    path: Option<PathBuf>,
    entries: Vec<LogEntry>,
    index: HashMap<Digest, usize>,
    /// Problems found while loading (skipped lines, dropped partial tail).
    pub warnings: Vec<String>,
}

impl TransactionLog {
    /// A log that lives only in memory.
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Load `path`, creating it if needed. A trailing line without a newline
    /// is the remains of an interrupted append: it is dropped and the file is
    /// cut back to the last complete entry.
    pub fn open(path: &Path) -> Result<Self, LogError> {
        let mut log = Self::read(path)?;
        if let Some(keep) = log.truncate_to {
            let f = OpenOptions::new().write(true).open(path).map_err(|source| LogError::Io { path: path.into(), source })?;
            f.set_len(keep).map_err(|source| LogError::Io { path: path.into(), source })?;
        }
        if !path.exists() {
            File::create(path).map_err(|source| LogError::Io { path: path.into(), source })?;
        }
        log.inner.path = Some(path.to_path_buf());
        Ok(log.inner)
    }

    /// Load without modifying the file.
    pub fn load(path: &Path) -> Result<Self, LogError> {
        Ok(Self::read(path)?.inner)
    }

    fn read(path: &Path) -> Result<Loaded, LogError> {
        let mut log = Self::default();
        let bytes = match fs::read(path) {
            Ok(b) => b,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Loaded { inner: log, truncate_to: None }),
            Err(source) => return Err(LogError::Io { path: path.into(), source }),
        };
        let mut offset = 0usize;
        let mut truncate_to = None;
        let mut lineno = 0;
        while offset < bytes.len() {
            lineno += 1;
            let Some(nl) = bytes[offset..].iter().position(|&b| b == b'\n') else {
                log.warnings.push(format!("dropped incomplete trailing entry at line {lineno}"));
                truncate_to = Some(offset as u64);
                break;
            };
            let line = &bytes[offset..offset + nl];
            offset += nl + 1;
            if line.iter().all(u8::is_ascii_whitespace) {
                continue;
            }
            match serde_json::from_slice::<LogEntry>(line) {
                Ok(e) => log.push_indexed(e),
                Err(err) => log.warnings.push(format!("skipped unreadable entry at line {lineno}: {err}")),
            }
        }
        Ok(Loaded { inner: log, truncate_to })
    }

    fn push_indexed(&mut self, e: LogEntry) {
        self.index.insert(e.fingerprint, self.entries.len());
        self.entries.push(e);
    }

    pub fn entries(&self) -> &[LogEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn lookup(&self, fp: &Digest) -> Option<&LogEntry> {
        self.index.get(fp).map(|&i| &self.entries[i])
    }

    /// Latest entry per fingerprint, in order of first appearance.
    pub fn latest(&self) -> Vec<&LogEntry> {
        let mut idx: Vec<usize> = self.index.values().copied().collect();
        idx.sort_unstable();
        idx.into_iter().map(|i| &self.entries[i]).collect()
    }

    /// Append one entry; the line is written and flushed before the index
    /// sees it.
    pub fn append(&mut self, e: LogEntry) -> Result<(), LogError> {
        if let Some(path) = &self.path {
            let mut line = serde_json::to_string(&e).expect("log entry serializes");
            line.push('\n');
            let write = || -> io::Result<()> {
                let mut f = OpenOptions::new().append(true).create(true).open(path)?;
                f.write_all(line.as_bytes())?;
                f.sync_data()
            };
            write().map_err(|source| LogError::Io { path: path.clone(), source })?;
        }
        self.push_indexed(e);
        Ok(())
    }

    /// Rewrite the file keeping only the latest entry per fingerprint for
    /// which `keep` holds. Returns the number of entries dropped.
    pub fn compact(&mut self, keep: impl Fn(&LogEntry) -> bool) -> Result<usize, LogError> {
        let kept: Vec<LogEntry> = self.latest().into_iter().filter(|e| keep(e)).cloned().collect();
        let dropped = self.entries.len() - kept.len();
        if let Some(path) = &self.path {
            let tmp = path.with_extension("jsonl.tmp");
            let mut text = String::new();
            for e in &kept {
                text.push_str(&serde_json::to_string(e).expect("log entry serializes"));
                text.push('\n');
            }
            fs::write(&tmp, text)
                .and_then(|()| fs::rename(&tmp, path))
                .map_err(|source| LogError::Io { path: path.clone(), source })?;
        }
        self.entries.clear();
        self.index.clear();
        for e in kept {
            self.push_indexed(e);
        }
        Ok(dropped)
    }
}

struct Loaded {
    inner: TransactionLog,
    truncate_to: Option<u64>,
}

pub(crate) fn now_secs() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}
