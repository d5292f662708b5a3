//! The interposition layer between task submission and execution: computes
//! fingerprints, answers hits from the transaction log and the task output
//! cache, and records completed executions.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use rewind_core::task::{fingerprint_cmd, fingerprint_fn, FingerprintError};
use rewind_core::{decode_data, encode_data, sha256, Canonicalizer, Data, Digest, TaskKind, TaskSpec};
use serde::{Deserialize, Serialize};

use crate::blobstore::{hash_file, BlobStore, StoreError};
use crate::tasklog::{now_secs, LogEntry, LogError, OutputRecord, TransactionLog};
use crate::workspace::{copy_creating_dirs, write_creating_dirs, Workspace};

#[derive(Debug, thiserror::Error)]
pub enum TaskError {
    #[error("task {task}: input {path}: {message}")]
    Input { task: String, path: String, message: String },
    #[error("task {task} failed with {status}: {stderr}")]
    Failed { task: String, status: String, stderr: String },
    #[error("task {task} did not produce declared output {path}")]
    MissingOutput { task: String, path: String },
    #[error("task {task}: {message}")]
    Runtime { task: String, message: String },
    #[error("task {task} skipped because ancestor {failed} failed")]
    Aborted { task: String, failed: String },
    #[error(transparent)]
    Fingerprint(#[from] FingerprintError),
    #[error(transparent)]
    Dag(#[from] rewind_core::DagError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Log(#[from] LogError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutcomeKind {
    Executed,
    Cached,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskOutcome {
    pub task_id: String,
    pub fingerprint: Digest,
    pub kind: OutcomeKind,
    pub outputs: Vec<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskStats {
    pub submitted: usize,
    pub cached: usize,
    pub executed: usize,
}

impl TaskStats {
    pub fn hit_rate(&self) -> f64 {
        if self.submitted == 0 {
            0.0
        } else {
            self.cached as f64 / self.submitted as f64
        }
    }

    pub fn record(&mut self, o: &TaskOutcome) {
        self.submitted += 1;
        match o.kind {
            OutcomeKind::Cached => self.cached += 1,
            OutcomeKind::Executed => self.executed += 1,
        }
    }
}

/// The value a task hands to its dependents: the return value of a function
/// task, or the list of output paths of a command task.
pub fn command_result(spec: &TaskSpec) -> Data {
    Data::List(spec.outputs.iter().cloned().map(Data::Str).collect())
}

pub struct RewindManager {
    log: TransactionLog,
    cache: Option<BlobStore>,
    canon: Canonicalizer,
    /// Problems that were worked around, such as stale cache entries.
    pub warnings: Vec<String>,
}

impl RewindManager {
    /// A manager backed by a persistent log and output cache.
    pub fn new(log: TransactionLog, cache: BlobStore, canon: Canonicalizer) -> Self {
        Self { log, cache: Some(cache), canon, warnings: Vec::new() }
    }

    /// A manager that never answers from cache and records nothing: every
    /// task executes.
    pub fn disabled(canon: Canonicalizer) -> Self {
        Self { log: TransactionLog::in_memory(), cache: None, canon, warnings: Vec::new() }
    }

    pub fn log(&self) -> &TransactionLog {
        &self.log
    }

    pub fn canonicalizer(&self) -> &Canonicalizer {
        &self.canon
    }

    fn warn(&mut self, msg: String) {
        log::warn!("{msg}");
        self.warnings.push(msg);
    }

    /// Fingerprint of `spec` given the fingerprints of its argument parents.
    /// Declared inputs are hashed from the workspace and must exist.
    pub fn fingerprint(
        &self,
        spec: &TaskSpec,
        ws: &Workspace,
        parent_fps: &BTreeMap<String, Digest>,
    ) -> Result<Digest, TaskError> {
        let mut named = Vec::with_capacity(spec.inputs.len());
        for rel in &spec.inputs {
            let input_err = |message: String| TaskError::Input { task: spec.id.clone(), path: rel.clone(), message };
            let path = ws.resolve(rel).map_err(input_err)?;
            let digest = hash_file(&path).map_err(|e| input_err(e.to_string()))?;
            let base = rel.rsplit('/').next().unwrap_or(rel).to_string();
            named.push((base, digest));
        }
        Ok(match &spec.kind {
            TaskKind::Command { command } => fingerprint_cmd(command, &named, &self.canon)?,
            TaskKind::Function { .. } => {
                let digests: Vec<Digest> = named.iter().map(|(_, d)| *d).collect();
                // Every argument parent is in the graph and fingerprinted
                // first; the fallback only guards against misuse.
                let parent = |p: &TaskSpec| {
                    parent_fps.get(&p.id).copied().unwrap_or_else(|| sha256(&encode_data(&Data::Task(Arc::new(p.clone())))))
                };
                fingerprint_fn(spec, &digests, &parent, &self.canon)?
            }
        })
    }

    /// Answer `spec` from the cache if possible, copying its outputs into the
    /// workspace. Any problem with the cached data is reported as a warning
    /// and turns the hit into a miss.
    pub fn lookup(&mut self, spec: &TaskSpec, fp: &Digest, ws: &Workspace) -> Option<Data> {
        let cache = self.cache.as_ref()?;
        let entry = self.log.lookup(fp)?.clone();
        let loaded = (|| -> Result<(Vec<(String, Vec<u8>)>, Data), String> {
            let mut declared: Vec<&String> = spec.outputs.iter().collect();
            let mut logged: Vec<&String> = entry.outputs.iter().map(|o| &o.path).collect();
            declared.sort();
            logged.sort();
            if declared != logged {
                return Err(String::from("logged outputs differ from declared outputs"));
            }
            let mut files = Vec::new();
            for o in &entry.outputs {
                files.push((o.path.clone(), cache.get(&o.digest).map_err(|e| e.to_string())?));
            }
            let result = match (&spec.kind, &entry.result) {
                (TaskKind::Command { .. }, _) => command_result(spec),
                (TaskKind::Function { .. }, Some(d)) => {
                    let bytes = cache.get(d).map_err(|e| e.to_string())?;
                    decode_data(&bytes).map_err(|e| format!("result blob {d}: {e}"))?
                }
                (TaskKind::Function { .. }, None) => return Err(String::from("no result recorded")),
            };
            Ok((files, result))
        })();
        match loaded {
            Ok((files, result)) => {
                for (rel, bytes) in files {
                    let written = ws.resolve(&rel).and_then(|p| write_creating_dirs(&p, &bytes).map_err(|e| e.to_string()));
                    if let Err(e) = written {
                        self.warn(format!("task {}: cannot materialize {rel}: {e}; re-executing", spec.id));
                        return None;
                    }
                }
                Some(result)
            }
            Err(e) => {
                self.warn(format!("task {} ({}): cached entry unusable: {e}; re-executing", spec.id, fp));
                None
            }
        }
    }

    /// Record an execution: copy declared outputs from `out_dir` into the
    /// workspace and the cache, store the result, append a log entry.
    pub fn complete(
        &mut self,
        spec: &TaskSpec,
        fp: Digest,
        out_dir: &Path,
        ws: &Workspace,
        result: &Data,
        wall_time_ms: u64,
    ) -> Result<(), TaskError> {
        let mut outputs = Vec::new();
        for rel in &spec.outputs {
            let missing = || TaskError::MissingOutput { task: spec.id.clone(), path: rel.clone() };
            let src = out_dir.join(rel);
            if !src.is_file() {
                return Err(missing());
            }
            let dst = ws.resolve(rel).map_err(|_| missing())?;
            if src != dst {
                copy_creating_dirs(&src, &dst).map_err(|e| TaskError::Runtime {
                    task: spec.id.clone(),
                    message: format!("copying {rel} into the workspace: {e}"),
                })?;
            }
            if let Some(cache) = &self.cache {
                outputs.push(OutputRecord { path: rel.clone(), digest: cache.put_file(&dst)? });
            }
        }
        let Some(cache) = &self.cache else { return Ok(()) };
        let result = match spec.kind {
            TaskKind::Function { .. } => Some(cache.put(&encode_data(result))?),
            TaskKind::Command { .. } => None,
        };
        let kind = match spec.kind {
            TaskKind::Function { .. } => "fn",
            TaskKind::Command { .. } => "cmd",
        };
        self.log.append(LogEntry {
            fingerprint: fp,
            task_id: spec.id.clone(),
            kind: kind.into(),
            outputs,
            result,
            wall_time_ms,
            timestamp: now_secs(),
        })?;
        Ok(())
    }
}
