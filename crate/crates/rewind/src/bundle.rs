//! The on-disk bundle: a plain directory holding the notebook copy, the
//! audit record, per-cell manifests, checkpoint blobs, the task log and the
//! task output cache.
//!
//! ```text
//! bundle/
//!   meta.json  notebook.json  audit.json  tasklog.jsonl  .lock
//!   checkpoints/<seq>-<cell-id>.json
//!   blobs/<hh>/<rest-of-hex>
//!   taskcache/blobs/<hh>/<rest-of-hex>
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, OpenOptions};
use std::io;
use std::path::{Path, PathBuf};

use rewind_core::{Canonicalizer, Digest};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::blobstore::{BlobStore, StoreError};
use crate::checkpoint::Manifest;
use crate::manager::TaskStats;
use crate::tasklog::{LogError, TransactionLog};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum BundleError {
    #[error("bundle I/O error at {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path} is not valid: {message}")]
    Format { path: PathBuf, message: String },
    #[error("{0} is not a bundle (no meta.json)")]
    NotABundle(PathBuf),
    #[error("bundle format version {0} is not supported")]
    Version(u32),
    #[error("bundle is locked by another writer ({0} exists)")]
    Locked(PathBuf),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Log(#[from] LogError),
}

impl BundleError {
    /// Whether the error means the bundle contents cannot be trusted.
    pub fn is_corruption(&self) -> bool {
        matches!(
            self,
            BundleError::Format { .. }
                | BundleError::Version(_)
                | BundleError::Store(StoreError::Missing(_) | StoreError::Corrupt { .. })
        )
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> BundleError + '_ {
    move |source| BundleError::Io { path: path.to_path_buf(), source }
}

/// Run configuration recorded at audit time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfigSnapshot {
    pub workers: usize,
    pub task_delay_ms: u64,
    pub sandbox: bool,
    pub canonicalizer: Canonicalizer,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Meta {
    pub format_version: u32,
    pub host: String,
    pub created_at: u64,
    pub config: ConfigSnapshot,
    /// Reserved for a mapping onto an external container description.
    pub backpack: Option<serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellRecord {
    pub cell_id: String,
    pub code_hash: Digest,
    pub stdout: String,
    /// Manifest path relative to the bundle root.
    pub manifest: String,
    pub wall_time_ms: u64,
    /// Encoded bytes of the checkpointed entries.
    pub checkpoint_bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditFailure {
    pub cell_id: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub cells: Vec<CellRecord>,
    pub tasks_submitted: usize,
    pub tasks_cached: usize,
    pub tasks_executed: usize,
    pub wall_time_ms: u64,
    /// Fingerprints of every task the run resolved, cached or executed.
    #[serde(default)]
    pub task_fingerprints: BTreeSet<Digest>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<AuditFailure>,
}

impl AuditRecord {
    pub fn stats(&self) -> TaskStats {
        TaskStats { submitted: self.tasks_submitted, cached: self.tasks_cached, executed: self.tasks_executed }
    }
}

/// Exclusive writer lock, released on drop.
#[derive(Debug)]
pub struct BundleLock {
    path: PathBuf,
}

impl Drop for BundleLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

#[derive(Debug, Clone)]
pub struct Bundle {
    root: PathBuf,
    blobs: BlobStore,
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, BundleError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    serde_json::from_slice(&bytes).map_err(|e| BundleError::Format { path: path.into(), message: e.to_string() })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), BundleError> {
    let text = serde_json::to_string_pretty(value).expect("bundle records serialize");
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, text).and_then(|()| fs::rename(&tmp, path)).map_err(io_err(path))
}

impl Bundle {
    /// Create the directory layout if needed.
    pub fn create(root: impl Into<PathBuf>) -> Result<Self, BundleError> {
        let root = root.into();
        for dir in [root.join("checkpoints"), root.join("taskcache")] {
            fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        }
        let blobs = BlobStore::open(root.join("blobs"))?;
        Ok(Self { root, blobs })
    }

    /// Open an existing bundle.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, BundleError> {
        let root = root.into();
        if !root.join("meta.json").is_file() {
            return Err(BundleError::NotABundle(root));
        }
        let b = Self { blobs: BlobStore::open(root.join("blobs"))?, root };
        let meta = b.read_meta()?;
        if meta.format_version != FORMAT_VERSION {
            return Err(BundleError::Version(meta.format_version));
        }
        Ok(b)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn blobs(&self) -> &BlobStore {
        &self.blobs
    }

    pub fn notebook_path(&self) -> PathBuf {
        self.root.join("notebook.json")
    }

    pub fn tasklog_path(&self) -> PathBuf {
        self.root.join("tasklog.jsonl")
    }

    pub fn taskcache(&self) -> Result<BlobStore, StoreError> {
        BlobStore::open(self.root.join("taskcache").join("blobs"))
    }

    /// Take the writer lock.
    pub fn lock(&self) -> Result<BundleLock, BundleError> {
        let path = self.root.join(".lock");
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(BundleLock { path }),
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => Err(BundleError::Locked(path)),
            Err(e) => Err(io_err(&path)(e)),
        }
    }

    pub fn read_meta(&self) -> Result<Meta, BundleError> {
        read_json(&self.root.join("meta.json"))
    }

    pub fn write_meta(&self, meta: &Meta) -> Result<(), BundleError> {
        write_json(&self.root.join("meta.json"), meta)
    }

    pub fn read_audit(&self) -> Result<AuditRecord, BundleError> {
        read_json(&self.root.join("audit.json"))
    }

    pub fn write_audit(&self, audit: &AuditRecord) -> Result<(), BundleError> {
        write_json(&self.root.join("audit.json"), audit)
    }

    /// Store a manifest, returning its bundle-relative path.
    pub fn write_manifest(&self, m: &Manifest) -> Result<String, BundleError> {
        let rel = format!("checkpoints/{}-{}.json", m.seq, m.cell_id);
        write_json(&self.root.join(&rel), m)?;
        Ok(rel)
    }

    pub fn read_manifest(&self, rel: &str) -> Result<Manifest, BundleError> {
        read_json(&self.root.join(rel))
    }

    /// Manifests of the audit, in cell order.
    pub fn manifests(&self, audit: &AuditRecord) -> Result<Vec<Manifest>, BundleError> {
        audit.cells.iter().map(|c| self.read_manifest(&c.manifest)).collect()
    }

    /// Bundle-relative paths of every manifest file present.
    pub fn manifest_files(&self) -> Result<Vec<String>, BundleError> {
        let dir = self.root.join("checkpoints");
        let mut out = Vec::new();
        for e in fs::read_dir(&dir).map_err(io_err(&dir))? {
            let e = e.map_err(io_err(&dir))?;
            let name = e.file_name().to_string_lossy().into_owned();
            if name.ends_with(".json") {
                out.push(format!("checkpoints/{name}"));
            }
        }
        out.sort();
        Ok(out)
    }

    /// Remove all manifests ahead of a new audit. Blobs stay for reuse.
    pub fn clear_manifests(&self) -> Result<(), BundleError> {
        for rel in self.manifest_files()? {
            let p = self.root.join(rel);
            fs::remove_file(&p).map_err(io_err(&p))?;
        }
        Ok(())
    }

    /// Re-hash every blob and check that every reference resolves.
    pub fn verify(&self) -> Result<VerifyReport, BundleError> {
        let mut r = VerifyReport::default();
        let cache = self.taskcache()?;
        for (store, label) in [(&self.blobs, "blobs"), (&cache, "taskcache")] {
            for d in store.list()? {
                r.blobs_checked += 1;
                match store.get(&d) {
                    Ok(_) => {}
                    Err(StoreError::Corrupt { .. }) => r.problems.push(format!("{label}: blob {d} does not match its hash")),
                    Err(e) => return Err(e.into()),
                }
            }
        }
        let audit = match self.read_audit() {
            Ok(a) => Some(a),
            Err(e) => {
                r.problems.push(format!("audit.json: {e}"));
                None
            }
        };
        for c in audit.iter().flat_map(|a| &a.cells) {
            match self.read_manifest(&c.manifest) {
                Ok(m) => {
                    if m.code_hash != c.code_hash || m.cell_id != c.cell_id {
                        r.problems.push(format!("{}: does not match audit record of cell {}", c.manifest, c.cell_id));
                    }
                    for d in m.blobs() {
                        if !self.blobs.contains(&d) {
                            r.problems.push(format!("{}: references missing blob {d}", c.manifest));
                        }
                    }
                }
                Err(e) => r.problems.push(format!("{}: {e}", c.manifest)),
            }
        }
        let log = TransactionLog::load(&self.tasklog_path())?;
        r.problems.extend(log.warnings.iter().map(|w| format!("tasklog.jsonl: {w}")));
        for e in log.entries() {
            r.log_entries += 1;
            for d in e.blobs() {
                if !cache.contains(d) {
                    r.problems.push(format!("tasklog.jsonl: task {} references missing cache blob {d}", e.task_id));
                }
            }
        }
        Ok(r)
    }

    /// Drop everything unreachable from the latest audit: stray manifests,
    /// unreferenced checkpoint blobs, log entries for tasks it did not
    /// resolve and the cache blobs only they referenced.
    pub fn gc(&self) -> Result<GcReport, BundleError> {
        let mut r = GcReport::default();
        let audit = self.read_audit()?;
        let live: BTreeSet<String> = audit.cells.iter().map(|c| c.manifest.clone()).collect();
        let mut reachable: BTreeSet<Digest> = BTreeSet::new();
        for m in self.manifests(&audit)? {
            reachable.extend(m.blobs());
        }
        for rel in self.manifest_files()? {
            if !live.contains(&rel) {
                let p = self.root.join(&rel);
                fs::remove_file(&p).map_err(io_err(&p))?;
                r.manifests_removed += 1;
            }
        }
        for d in self.blobs.list()? {
            if !reachable.contains(&d) {
                r.bytes_freed += self.blobs.size_of(&d).unwrap_or(0);
                self.blobs.remove(&d)?;
                r.blobs_removed += 1;
            }
        }
        let mut log = TransactionLog::open(&self.tasklog_path())?;
        r.log_entries_removed = log.compact(|e| audit.task_fingerprints.contains(&e.fingerprint))?;
        let cache = self.taskcache()?;
        let cached: BTreeSet<Digest> = log.entries().iter().flat_map(|e| e.blobs().copied()).collect();
        for d in cache.list()? {
            if !cached.contains(&d) {
                r.bytes_freed += cache.size_of(&d).unwrap_or(0);
                cache.remove(&d)?;
                r.cache_blobs_removed += 1;
            }
        }
        Ok(r)
    }

    /// Storage accounting for the latest audit.
    pub fn inspect(&self) -> Result<InspectReport, BundleError> {
        let audit = self.read_audit()?;
        let mut r = InspectReport::default();
        let mut distinct: BTreeMap<Digest, u64> = BTreeMap::new();
        for m in self.manifests(&audit)? {
            let entries: Vec<EntrySummary> = m
                .entries
                .iter()
                .map(|e| EntrySummary { name: e.name.clone(), kind: e.kind.clone(), size: e.size, serializable: e.serializable })
                .collect();
            for e in &m.entries {
                if let Some(d) = e.blob {
                    distinct.insert(d, e.size);
                }
            }
            r.pre_dedup_bytes += m.referenced_bytes();
            r.cells.push(CellSummary { cell_id: m.cell_id.clone(), seq: m.seq, bytes: m.referenced_bytes(), entries });
        }
        r.post_dedup_bytes = distinct.values().sum();
        r.ratio = if r.pre_dedup_bytes == 0 { 0.0 } else { r.post_dedup_bytes as f64 / r.pre_dedup_bytes as f64 };
        r.blob_store_bytes = self.blobs.total_bytes()?;
        let cache = self.taskcache()?;
        r.intermediate_files = cache.list()?.len();
        r.intermediate_bytes = cache.total_bytes()?;
        let log = TransactionLog::load(&self.tasklog_path())?;
        r.log_entries = log.len();
        r.log_fingerprints = log.latest().len();
        r.tasks_submitted = audit.tasks_submitted;
        r.tasks_executed = audit.tasks_executed;
        r.tasks_cached = audit.tasks_cached;
        Ok(r)
    }
}

#[derive(Debug, Default, Clone, Serialize)]
pub struct VerifyReport {
    pub blobs_checked: usize,
    pub log_entries: usize,
    pub problems: Vec<String>,
}

impl VerifyReport {
    pub fn ok(&self) -> bool {
        self.problems.is_empty()
    }
}

#[derive(Debug, Default, Clone, Serialize)]
pub struct GcReport {
    pub manifests_removed: usize,
    pub blobs_removed: usize,
    pub log_entries_removed: usize,
    pub cache_blobs_removed: usize,
    pub bytes_freed: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EntrySummary {
    pub name: String,
    pub kind: String,
    pub size: u64,
    pub serializable: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct CellSummary {
    pub cell_id: String,
    pub seq: usize,
    pub bytes: u64,
    pub entries: Vec<EntrySummary>,
}

#[derive(Debug, Default, Clone, Serialize)]
pub struct InspectReport {
    pub cells: Vec<CellSummary>,
    /// Sum of the sizes of all manifest entries.
    pub pre_dedup_bytes: u64,
    /// Sum of the sizes of the distinct blobs those entries reference.
    pub post_dedup_bytes: u64,
    /// `post_dedup_bytes / pre_dedup_bytes`, 0 when nothing was stored.
    pub ratio: f64,
    /// Everything under `blobs/`, including written files and task lists.
    pub blob_store_bytes: u64,
    pub intermediate_files: usize,
    pub intermediate_bytes: u64,
    pub log_entries: usize,
    pub log_fingerprints: usize,
    pub tasks_submitted: usize,
    pub tasks_cached: usize,
    pub tasks_executed: usize,
}
