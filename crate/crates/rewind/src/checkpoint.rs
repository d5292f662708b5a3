//! Per-cell incremental checkpoints and state reconstruction.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rewind_core::interp::{
    apply_sharing, eval_cell_at, serialize_value, shared_closure, sharing_groups, Host, KernelState, Origin, Path,
    SerializeError,
};
use rewind_core::{decode_data, encode_data, parse_cell, Data, Digest, ExecResult, RwInfo, StmtRef, TaskSpec, Value};
use serde::{Deserialize, Serialize};

use crate::blobstore::{BlobStore, StoreError};

/// The statement that last bound a variable.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Producer {
    pub cell_id: String,
    pub index: u32,
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VarEntry {
    pub name: String,
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blob: Option<Digest>,
    /// Encoded size in bytes (0 when not serializable).
    pub size: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub producer: Option<Producer>,
    pub deps: Vec<String>,
    pub serializable: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileRecord {
    pub path: String,
    pub blob: Digest,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub cell_id: String,
    pub seq: usize,
    pub code_hash: Digest,
    pub entries: Vec<VarEntry>,
    /// Locations among `entries` that held one heap object.
    #[serde(default)]
    pub sharing: Vec<Vec<Path>>,
    pub stdout: String,
    /// Files the cell wrote with `write_text`.
    #[serde(default)]
    pub files: Vec<FileRecord>,
    /// Encoded `{"computed": [...], "submitted": [...]}` task lists.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tasks: Option<Digest>,
    /// Globals looked up while the cell ran, including through functions.
    #[serde(default)]
    pub observed_reads: BTreeSet<String>,
    /// Names the cell bound, defined or mutated.
    #[serde(default)]
    pub observed_writes: BTreeSet<String>,
}

impl Manifest {
    pub fn names(&self) -> BTreeSet<String> {
        self.entries.iter().map(|e| e.name.clone()).collect()
    }

    /// Every checkpoint blob this manifest references.
    pub fn blobs(&self) -> Vec<Digest> {
        self.entries
            .iter()
            .filter_map(|e| e.blob)
            .chain(self.files.iter().map(|f| f.blob))
            .chain(self.tasks)
            .collect()
    }

    /// Referenced bytes before deduplication.
    pub fn referenced_bytes(&self) -> u64 {
        self.entries.iter().map(|e| e.size).sum()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("cannot checkpoint `{0}`: value contains a reference cycle")]
    Cycle(String),
    #[error("cannot checkpoint `{0}`: {1}")]
    Serialize(String, SerializeError),
    #[error("checkpoint blob for `{name}`: {source}")]
    Blob { name: String, source: StoreError },
    #[error("checkpoint blob for `{name}` does not decode: {message}")]
    Decode { name: String, message: String },
    #[error("cannot re-create `{name}` by re-running `{source_text}`: {message}")]
    Reconstruct { name: String, source_text: String, message: String },
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// Task lists recorded per cell.
#[derive(Debug, Default, Clone)]
pub struct CellTasks {
    pub submitted: Vec<Arc<TaskSpec>>,
    pub computed: Vec<Arc<TaskSpec>>,
}

fn task_list(tasks: &[Arc<TaskSpec>]) -> Data {
    Data::List(tasks.iter().cloned().map(Data::Task).collect())
}

pub fn store_tasks(store: &BlobStore, tasks: &CellTasks) -> Result<Option<Digest>, StoreError> {
    if tasks.submitted.is_empty() && tasks.computed.is_empty() {
        return Ok(None);
    }
    let mut m = BTreeMap::new();
    m.insert("computed".to_string(), task_list(&tasks.computed));
    m.insert("submitted".to_string(), task_list(&tasks.submitted));
    store.put(&encode_data(&Data::Map(m))).map(Some)
}

pub fn load_tasks(store: &BlobStore, m: &Manifest) -> Result<CellTasks, CheckpointError> {
    let Some(d) = m.tasks else { return Ok(CellTasks::default()) };
    let name = format!("<tasks of {}>", m.cell_id);
    let bytes = store.get(&d).map_err(|source| CheckpointError::Blob { name: name.clone(), source })?;
    let bad = |message: String| CheckpointError::Decode { name: name.clone(), message };
    let Data::Map(map) = decode_data(&bytes).map_err(|e| bad(e.to_string()))? else {
        return Err(bad("not a map".into()));
    };
    let list = |key: &str| -> Result<Vec<Arc<TaskSpec>>, CheckpointError> {
        match map.get(key) {
            Some(Data::List(items)) => items
                .iter()
                .map(|i| match i {
                    Data::Task(t) => Ok(t.clone()),
                    _ => Err(bad(format!("{key} holds a non-task"))),
                })
                .collect(),
            _ => Err(bad(format!("missing {key}"))),
        }
    };
    Ok(CellTasks { submitted: list("submitted")?, computed: list("computed")? })
}

/// Names checkpointed after a cell: everything it touched, closed under
/// sharing, restricted to bound names.
pub fn checkpoint_scope(state: &KernelState, rw: &RwInfo, exec: &ExecResult) -> BTreeSet<String> {
    let touched: BTreeSet<String> = rw.touched().into_iter().chain(exec.writes_observed.iter().cloned()).collect();
    shared_closure(state, &touched)
}

/// Snapshot the variables a just-executed cell touched.
pub fn make_checkpoint(
    state: &KernelState,
    cell_id: &str,
    seq: usize,
    code_hash: Digest,
    rw: &RwInfo,
    exec: &ExecResult,
    store: &BlobStore,
) -> Result<Manifest, CheckpointError> {
    let names = checkpoint_scope(state, rw, exec);
    let mut entries = Vec::new();
    for name in &names {
        let v = state.get(name).expect("scope holds bound names");
        let origin = state.origin(name);
        let producer = origin.map(|o| Producer { cell_id: o.stmt.cell_id.clone(), index: o.stmt.index, source: o.source.clone() });
        let deps = origin.map(|o| o.deps.clone()).unwrap_or_default();
        let (blob, size, serializable) = match serialize_value(state, v) {
            Ok(bytes) => {
                let d = store.put(&bytes).map_err(|source| CheckpointError::Blob { name: name.clone(), source })?;
                (Some(d), bytes.len() as u64, true)
            }
            Err(SerializeError::NonSerializable(_)) => (None, 0, false),
            Err(SerializeError::Cycle) => return Err(CheckpointError::Cycle(name.clone())),
            Err(e) => return Err(CheckpointError::Serialize(name.clone(), e)),
        };
        entries.push(VarEntry { name: name.clone(), kind: v.kind().to_string(), blob, size, producer, deps, serializable });
    }
    let serializable: Vec<String> = entries.iter().filter(|e| e.serializable).map(|e| e.name.clone()).collect();
    Ok(Manifest {
        cell_id: cell_id.to_string(),
        seq,
        code_hash,
        entries,
        sharing: sharing_groups(state, &serializable),
        stdout: exec.stdout.clone(),
        files: Vec::new(),
        tasks: None,
        observed_reads: exec.reads_observed.clone(),
        observed_writes: rw.writes.iter().chain(&rw.defs).chain(&exec.writes_observed).cloned().collect(),
    })
}

/// Load entries into `state`. `parts` pairs each manifest with the entries
/// to take from it; sharing groups are applied among entries taken from the
/// same manifest. Non-serializable values are then re-created by re-running
/// their producing statements in statement order.
pub fn restore_entries(
    state: &mut KernelState,
    parts: &[(&Manifest, Vec<&VarEntry>)],
    store: &BlobStore,
    host: &mut dyn Host,
) -> Result<(), CheckpointError> {
    let mut rerun: Vec<(usize, &VarEntry)> = Vec::new();
    for (m, entries) in parts {
        for e in entries {
            match (&e.blob, e.serializable) {
                (Some(_), true) => {
                    let v = load_entry(state, e, store)?;
                    state.bind(&e.name, v);
                    if let Some(p) = &e.producer {
                        state.set_origin(&e.name, origin_of(p, &e.deps));
                    }
                }
                _ => rerun.push((m.seq, e)),
            }
        }
        let taken: BTreeSet<String> = entries.iter().filter(|e| e.serializable).map(|e| e.name.clone()).collect();
        let partial = m.sharing.iter().flatten().any(|p| !taken.contains(&p.var));
        let groups = if partial { regroup(m, &taken, store)? } else { m.sharing.clone() };
        apply_sharing(state, &groups);
    }
    rerun.sort_by_key(|(seq, e)| (*seq, e.producer.as_ref().map(|p| p.index)));
    for (_, e) in rerun {
        let Some(p) = &e.producer else {
            return Err(CheckpointError::Reconstruct {
                name: e.name.clone(),
                source_text: String::new(),
                message: "no producing statement recorded".into(),
            });
        };
        let fail = |message: String| CheckpointError::Reconstruct {
            name: e.name.clone(),
            source_text: p.source.clone(),
            message,
        };
        let ast = parse_cell(&p.source).map_err(|err| fail(err.to_string()))?;
        eval_cell_at(state, &p.cell_id, p.index, &ast, host).map_err(|err| fail(err.to_string()))?;
        if !state.contains(&e.name) {
            return Err(fail("statement did not bind the variable".into()));
        }
    }
    Ok(())
}

fn load_entry(state: &mut KernelState, e: &VarEntry, store: &BlobStore) -> Result<Value, CheckpointError> {
    let d = e.blob.as_ref().expect("serializable entries have a blob");
    let bytes = store.get(d).map_err(|source| CheckpointError::Blob { name: e.name.clone(), source })?;
    let data = decode_data(&bytes).map_err(|err| CheckpointError::Decode { name: e.name.clone(), message: err.to_string() })?;
    Ok(state.from_data(&data))
}

/// Sharing among `taken` alone. Recorded groups locate shared objects by
/// their first path across all entries, which may lie under a name that is
/// not restored, so rebuild the whole manifest aside and regroup.
fn regroup(m: &Manifest, taken: &BTreeSet<String>, store: &BlobStore) -> Result<Vec<Vec<Path>>, CheckpointError> {
    let mut scratch = KernelState::new();
    for e in m.entries.iter().filter(|e| e.serializable) {
        let v = load_entry(&mut scratch, e, store)?;
        scratch.bind(&e.name, v);
    }
    apply_sharing(&mut scratch, &m.sharing);
    Ok(sharing_groups(&scratch, taken))
}

fn origin_of(p: &Producer, deps: &[String]) -> Origin {
    Origin {
        stmt: StmtRef { cell_id: p.cell_id.clone(), index: p.index },
        source: p.source.clone(),
        deps: deps.to_vec(),
    }
}

/// Rebuild kernel state from a prefix of manifests. For each variable the
/// entry of the latest manifest containing it wins.
pub fn compose_state(manifests: &[Manifest], store: &BlobStore, host: &mut dyn Host) -> Result<KernelState, CheckpointError> {
    let mut winner: BTreeMap<&str, usize> = BTreeMap::new();
    for (i, m) in manifests.iter().enumerate() {
        for e in &m.entries {
            winner.insert(&e.name, i);
        }
    }
    let parts: Vec<(&Manifest, Vec<&VarEntry>)> = manifests
        .iter()
        .enumerate()
        .map(|(i, m)| (m, m.entries.iter().filter(|e| winner[e.name.as_str()] == i).collect()))
        .collect();
    let mut state = KernelState::new();
    restore_entries(&mut state, &parts, store, host)?;
    Ok(state)
}
