//! Audit and repeat runs over a bundle.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rewind_core::interp::{eval_cell, handle_origin, shared_closure, KernelState};
use rewind_core::{analyze_rw, cell_code_hash, CellAst, Canonicalizer, Digest, TaskSpec, Value};
use serde::Serialize;

use crate::blobstore::{hash_file, StoreError};
use crate::bundle::{AuditFailure, AuditRecord, Bundle, BundleError, CellRecord, ConfigSnapshot, Meta, FORMAT_VERSION};
use crate::checkpoint::{
    compose_state, load_tasks, make_checkpoint, restore_entries, store_tasks, CellTasks, CheckpointError, FileRecord,
    Manifest, VarEntry,
};
use crate::executor::{ExecConfig, Executor};
use crate::manager::{OutcomeKind, RewindManager, TaskOutcome, TaskStats};
use crate::notebook::{Cell, Notebook, NotebookError};
use crate::session::{CellEffects, Session};
use crate::tasklog::{now_secs, TransactionLog};
use crate::workspace::Workspace;

#[derive(Debug, Clone, Default)]
pub struct RunConfig {
    pub exec: ExecConfig,
    pub canonicalizer: Canonicalizer,
    /// On repeat, use `canonicalizer` even if the bundle recorded another.
    pub force_canonicalizer: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Notebook(#[from] NotebookError),
    #[error(transparent)]
    Bundle(#[from] BundleError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("cell {cell_id} failed: {message}")]
    Cell { cell_id: String, message: String },
    #[error("{0}")]
    Argument(String),
}

impl RunError {
    /// Whether the failure comes from damaged bundle contents.
    pub fn is_corruption(&self) -> bool {
        match self {
            RunError::Bundle(e) => e.is_corruption(),
            RunError::Checkpoint(CheckpointError::Decode { .. }) => true,
            RunError::Checkpoint(
                CheckpointError::Blob { source, .. } | CheckpointError::Store(source),
            ) => matches!(source, StoreError::Missing(_) | StoreError::Corrupt { .. }),
            _ => false,
        }
    }
}

fn open_session(ws: &Path, bundle: &Bundle, cfg: &ExecConfig, canon: Canonicalizer) -> Result<Session, RunError> {
    let mut log = TransactionLog::open(&bundle.tasklog_path()).map_err(BundleError::from)?;
    let loaded: Vec<String> = log.warnings.drain(..).map(|w| format!("tasklog.jsonl: {w}")).collect();
    let mut manager = RewindManager::new(log, bundle.taskcache().map_err(BundleError::from)?, canon);
    for w in loaded {
        log::warn!("{w}");
        manager.warnings.push(w);
    }
    Ok(Session::new(Workspace::new(ws), Executor::new(cfg.clone()), manager))
}

fn host_name() -> String {
    std::env::var("HOSTNAME")
        .ok()
        .or_else(|| std::fs::read_to_string("/etc/hostname").ok())
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| "unknown".into())
}

fn ms(t: Instant) -> u64 {
    t.elapsed().as_millis() as u64
}

/// Hash every output a run declared: task outputs and `write_text` files.
fn collect_outputs(ws: &Workspace, tasks: &[Arc<TaskSpec>], files: &BTreeSet<String>) -> BTreeMap<String, Digest> {
    let mut out = BTreeMap::new();
    for rel in tasks.iter().flat_map(|t| t.outputs.iter()).chain(files) {
        if let Ok(p) = ws.resolve(rel) {
            if let Ok(d) = hash_file(&p) {
                out.insert(rel.clone(), d);
            }
        }
    }
    out
}

#[derive(Debug, Default)]
struct OutputTracker {
    tasks: Vec<Arc<TaskSpec>>,
    files: BTreeSet<String>,
}

impl OutputTracker {
    fn add(&mut self, tasks: &[Arc<TaskSpec>], files: impl IntoIterator<Item = String>) {
        for t in tasks {
            if !self.tasks.iter().any(|k| k.id == t.id) {
                self.tasks.push(t.clone());
            }
        }
        self.files.extend(files);
    }
}

/// Result of an audit that ran to completion.
#[derive(Debug)]
pub struct AuditOutcome {
    pub record: AuditRecord,
    pub state: KernelState,
    pub manifests: Vec<Manifest>,
    /// Declared output files and their digests.
    pub outputs: BTreeMap<String, Digest>,
    pub outcomes: Vec<TaskOutcome>,
    pub warnings: Vec<String>,
}

/// Execute every cell with checkpointing and task recording, writing a
/// bundle at `bundle_root`. An existing bundle is re-audited: its manifests
/// are replaced while blobs, the task log and the cache are reused.
///
/// When a cell fails, the completed cells are persisted, the audit record
/// notes the failure, and the cell error is returned.
pub fn audit_run(nb: &Notebook, ws: &Path, bundle_root: &Path, cfg: &RunConfig) -> Result<AuditOutcome, RunError> {
    let asts = nb.parse_cells()?;
    let bundle = Bundle::create(bundle_root)?;
    let _lock = bundle.lock()?;
    bundle.write_meta(&Meta {
        format_version: FORMAT_VERSION,
        host: host_name(),
        created_at: now_secs(),
        config: ConfigSnapshot {
            workers: cfg.exec.workers,
            task_delay_ms: cfg.exec.task_delay_ms,
            sandbox: cfg.exec.sandbox,
            canonicalizer: cfg.canonicalizer,
        },
        backpack: None,
    })?;
    let nb_path = bundle.notebook_path();
    std::fs::write(&nb_path, nb.to_json()).map_err(|source| BundleError::Io { path: nb_path, source })?;
    bundle.clear_manifests()?;

    let started = Instant::now();
    let mut session = open_session(ws, &bundle, &cfg.exec, cfg.canonicalizer)?;
    let mut state = KernelState::new();
    let mut record = AuditRecord {
        cells: Vec::new(),
        tasks_submitted: 0,
        tasks_cached: 0,
        tasks_executed: 0,
        wall_time_ms: 0,
        task_fingerprints: BTreeSet::new(),
        failure: None,
    };
    let mut manifests = Vec::new();
    let mut tracker = OutputTracker::default();
    let mut failure = None;

    for (seq, (cell, ast)) in nb.cells.iter().zip(&asts).enumerate() {
        session.take_effects();
        let t = Instant::now();
        let rw = analyze_rw(ast);
        let exec = match eval_cell(&mut state, &cell.id, ast, &mut session) {
            Ok(e) => e,
            Err(e) => {
                failure = Some(AuditFailure { cell_id: cell.id.clone(), message: e.to_string() });
                break;
            }
        };
        let effects = session.take_effects();
        let mut m = make_checkpoint(&state, &cell.id, seq, cell_code_hash(&cell.code), &rw, &exec, bundle.blobs())?;
        store_effects(&mut m, &effects, &session.ws, &bundle)?;
        tracker.add(&effects.computed, effects.files.keys().cloned());
        let manifest = bundle.write_manifest(&m)?;
        record.cells.push(CellRecord {
            cell_id: cell.id.clone(),
            code_hash: m.code_hash,
            stdout: exec.stdout.clone(),
            manifest,
            wall_time_ms: ms(t),
            checkpoint_bytes: m.referenced_bytes(),
        });
        manifests.push(m);
    }

    record.tasks_submitted = session.stats.submitted;
    record.tasks_cached = session.stats.cached;
    record.tasks_executed = session.stats.executed;
    record.wall_time_ms = ms(started);
    record.task_fingerprints = session.outcomes.iter().map(|o| o.fingerprint).collect();
    record.failure = failure.clone();
    bundle.write_audit(&record)?;
    if let Some(f) = failure {
        return Err(RunError::Cell { cell_id: f.cell_id, message: f.message });
    }
    Ok(AuditOutcome {
        outputs: collect_outputs(&session.ws, &tracker.tasks, &tracker.files),
        record,
        state,
        manifests,
        outcomes: session.outcomes,
        warnings: session.manager.warnings,
    })
}

/// Store a cell's written files and task lists alongside its manifest.
fn store_effects(m: &mut Manifest, effects: &CellEffects, ws: &Workspace, bundle: &Bundle) -> Result<(), RunError> {
    for (path, digest) in &effects.files {
        let bytes = ws
            .resolve(path)
            .and_then(|p| std::fs::read(&p).map_err(|e| e.to_string()))
            .map_err(|message| RunError::Cell { cell_id: m.cell_id.clone(), message: format!("{path}: {message}") })?;
        let blob = bundle.blobs().put(&bytes).map_err(CheckpointError::from)?;
        if blob != *digest {
            log::warn!("{path} changed after cell {} wrote it", m.cell_id);
        }
        m.files.push(FileRecord { path: path.clone(), blob });
    }
    let tasks = CellTasks { submitted: effects.submitted.clone(), computed: effects.computed.clone() };
    m.tasks = store_tasks(bundle.blobs(), &tasks).map_err(CheckpointError::from)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ChangeStatus {
    Unchanged,
    Modified,
    Added,
    Removed,
}

/// Match cells by id and compare code hashes. Removed cells are listed
/// after the cells of the new notebook.
pub fn detect_changes(nb: &Notebook, audit: &AuditRecord) -> Vec<(String, ChangeStatus)> {
    let old: BTreeMap<&str, &CellRecord> = audit.cells.iter().map(|c| (c.cell_id.as_str(), c)).collect();
    let mut out: Vec<(String, ChangeStatus)> = nb
        .cells
        .iter()
        .map(|c| {
            let status = match old.get(c.id.as_str()) {
                None => ChangeStatus::Added,
                Some(r) if r.code_hash == cell_code_hash(&c.code) => ChangeStatus::Unchanged,
                Some(_) => ChangeStatus::Modified,
            };
            (c.id.clone(), status)
        })
        .collect();
    for c in &audit.cells {
        if nb.index_of(&c.cell_id).is_none() {
            out.push((c.cell_id.clone(), ChangeStatus::Removed));
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CellAction {
    Restored,
    Executed,
}

#[derive(Debug, Clone, Serialize)]
pub struct CellReport {
    pub cell_id: String,
    pub status: ChangeStatus,
    pub action: CellAction,
    /// Why an unchanged cell was executed anyway.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    pub stdout: String,
    pub wall_time_ms: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RepeatReport {
    pub cells: Vec<CellReport>,
    pub cells_restored: Vec<String>,
    pub cells_executed: Vec<String>,
    pub cells_removed: Vec<String>,
    pub tasks_submitted: usize,
    pub tasks_cached: usize,
    pub tasks_executed: usize,
    pub hit_rate: f64,
    pub tasks: Vec<TaskOutcome>,
    /// Declared output files and their digests.
    pub outputs: BTreeMap<String, Digest>,
    pub warnings: Vec<String>,
    pub wall_time_ms: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<AuditFailure>,
}

impl RepeatReport {
    pub fn stats(&self) -> TaskStats {
        TaskStats { submitted: self.tasks_submitted, cached: self.tasks_cached, executed: self.tasks_executed }
    }

    pub fn executed_tasks(&self) -> BTreeSet<String> {
        self.tasks.iter().filter(|t| t.kind == OutcomeKind::Executed).map(|t| t.task_id.clone()).collect()
    }

    pub fn cached_tasks(&self) -> BTreeSet<String> {
        self.tasks.iter().filter(|t| t.kind == OutcomeKind::Cached).map(|t| t.task_id.clone()).collect()
    }
}

/// Outcome of [`repeat_run`]. A failing cell still yields a report.
#[derive(Debug)]
pub struct RepeatOutcome {
    pub report: RepeatReport,
    pub state: KernelState,
}

/// Re-run `nb` against the audit in `bundle_root`: unchanged cells whose
/// inputs are clean are restored from their checkpoints, everything else
/// executes with the task cache active.
pub fn repeat_run(nb: &Notebook, ws: &Path, bundle_root: &Path, cfg: &RunConfig) -> Result<RepeatOutcome, RunError> {
    let asts = nb.parse_cells()?;
    let bundle = Bundle::open(bundle_root)?;
    let _lock = bundle.lock()?;
    let meta = bundle.read_meta()?;
    let audit = bundle.read_audit()?;
    let mut warnings = Vec::new();
    let canon = if cfg.force_canonicalizer {
        if meta.config.canonicalizer != cfg.canonicalizer {
            warnings.push(format!(
                "canonicalization differs from the audit ({:?} vs {:?}); cached tasks may not match",
                cfg.canonicalizer, meta.config.canonicalizer
            ));
        }
        cfg.canonicalizer
    } else {
        meta.config.canonicalizer
    };

    let started = Instant::now();
    let manifests: BTreeMap<String, Manifest> = bundle
        .manifests(&audit)?
        .into_iter()
        .map(|m| (m.cell_id.clone(), m))
        .collect();
    let changes: BTreeMap<String, ChangeStatus> = detect_changes(nb, &audit).into_iter().collect();
    let mut session = open_session(ws, &bundle, &cfg.exec, canon)?;
    let mut state = KernelState::new();
    let mut dirty: BTreeSet<String> = BTreeSet::new();
    let mut tracker = OutputTracker::default();
    let mut cells = Vec::new();
    let mut failure = None;

    let removed: Vec<String> = changes.iter().filter(|(_, s)| **s == ChangeStatus::Removed).map(|(k, _)| k.clone()).collect();
    for id in &removed {
        if let Some(m) = manifests.get(id) {
            dirty.extend(m.observed_writes.iter().cloned());
        }
    }
    // Relative order of cells present in both versions.
    let old_pos: BTreeMap<&str, usize> = audit.cells.iter().enumerate().map(|(i, c)| (c.cell_id.as_str(), i)).collect();
    let mut last_old = None;

    for (cell, ast) in nb.cells.iter().zip(&asts) {
        let t = Instant::now();
        let status = changes[&cell.id];
        let rw = analyze_rw(ast);
        let manifest = manifests.get(&cell.id);
        let moved = match old_pos.get(cell.id.as_str()) {
            Some(&p) => {
                let m = last_old.is_some_and(|l| p < l);
                last_old = Some(p);
                m
            }
            None => false,
        };
        let reason = match (status, manifest) {
            (ChangeStatus::Unchanged, Some(_)) if moved => Some("moved relative to other cells".to_string()),
            (ChangeStatus::Unchanged, Some(m)) => needs_rerun(&state, &rw, m, &dirty),
            (ChangeStatus::Unchanged, None) => Some("no checkpoint".to_string()),
            _ => None,
        };
        let restore = status == ChangeStatus::Unchanged && reason.is_none();
        session.take_effects();

        if restore {
            let m = manifest.expect("restorable cells have a manifest");
            restore_cell(&mut state, m, &bundle, &mut session)
                .map_err(|e| wrap_cell_error(e, &cell.id, &session))?;
            let effects = session.take_effects();
            let tasks = load_tasks(bundle.blobs(), m)?;
            tracker.add(&tasks.computed, m.files.iter().map(|f| f.path.clone()));
            tracker.add(&effects.computed, []);
            cells.push(CellReport {
                cell_id: cell.id.clone(),
                status,
                action: CellAction::Restored,
                reason: None,
                stdout: m.stdout.clone(),
                wall_time_ms: ms(t),
            });
            continue;
        }

        let before: BTreeSet<String> = state.names().cloned().collect();
        match eval_cell(&mut state, &cell.id, ast, &mut session) {
            Ok(exec) => {
                let effects = session.take_effects();
                tracker.add(&effects.computed, effects.files.keys().cloned());
                let written: BTreeSet<String> =
                    rw.writes.iter().chain(&rw.defs).chain(&exec.writes_observed).cloned().collect();
                dirty.extend(shared_closure(&state, &written));
                dirty.extend(written);
                if let Some(m) = manifest {
                    dirty.extend(m.observed_writes.iter().cloned());
                }
                dirty.extend(before.symmetric_difference(&state.names().cloned().collect()).cloned());
                cells.push(CellReport {
                    cell_id: cell.id.clone(),
                    status,
                    action: CellAction::Executed,
                    reason,
                    stdout: exec.stdout,
                    wall_time_ms: ms(t),
                });
            }
            Err(e) => {
                failure = Some(AuditFailure { cell_id: cell.id.clone(), message: e.to_string() });
                cells.push(CellReport {
                    cell_id: cell.id.clone(),
                    status,
                    action: CellAction::Executed,
                    reason,
                    stdout: String::new(),
                    wall_time_ms: ms(t),
                });
                break;
            }
        }
    }

    warnings.extend(session.manager.warnings.iter().cloned());
    let pick = |a: CellAction| cells.iter().filter(|c| c.action == a).map(|c| c.cell_id.clone()).collect::<Vec<_>>();
    let report = RepeatReport {
        cells_restored: pick(CellAction::Restored),
        cells_executed: pick(CellAction::Executed),
        cells_removed: removed,
        tasks_submitted: session.stats.submitted,
        tasks_cached: session.stats.cached,
        tasks_executed: session.stats.executed,
        hit_rate: session.stats.hit_rate(),
        tasks: session.outcomes.clone(),
        outputs: collect_outputs(&session.ws, &tracker.tasks, &tracker.files),
        warnings,
        wall_time_ms: ms(started),
        failure,
        cells,
    };
    Ok(RepeatOutcome { report, state })
}

fn wrap_cell_error(e: RunError, cell_id: &str, session: &Session) -> RunError {
    match e {
        RunError::Cell { message, .. } => RunError::Cell {
            cell_id: cell_id.to_string(),
            message: session.last_task_error.clone().unwrap_or(message),
        },
        other => other,
    }
}

/// Why an unchanged cell cannot be restored, if it cannot.
fn needs_rerun(state: &KernelState, rw: &rewind_core::RwInfo, m: &Manifest, dirty: &BTreeSet<String>) -> Option<String> {
    if let Some(missing) = rw.free_reads.iter().find(|r| !state.contains(r)) {
        return Some(format!("reads `{missing}`, which is not bound"));
    }
    let mut names: BTreeSet<String> = rw.free_reads.clone();
    names.extend(m.observed_reads.iter().cloned());
    names.extend(rw.writes.iter().cloned());
    names.extend(m.names());
    let closure = shared_closure(state, &names);
    names.extend(closure);
    names.intersection(dirty).next().map(|d| format!("depends on `{d}`, which changed"))
}

/// Bring a cell's effects back without running it: checkpointed values,
/// written files, and its tasks (answered from the task cache).
fn restore_cell(state: &mut KernelState, m: &Manifest, bundle: &Bundle, session: &mut Session) -> Result<(), RunError> {
    // A handle that is already live from the same statement is kept.
    let entries: Vec<&VarEntry> = m
        .entries
        .iter()
        .filter(|e| {
            if e.serializable {
                return true;
            }
            let live = state.get(&e.name).and_then(|v| match v {
                Value::Handle(_) => handle_origin(state, v),
                _ => None,
            });
            match (live, &e.producer) {
                (Some(o), Some(p)) => !(o.cell_id == p.cell_id && o.index == p.index),
                _ => true,
            }
        })
        .collect();
    restore_entries(state, &[(m, entries)], bundle.blobs(), session)?;
    for f in &m.files {
        let bytes = bundle.blobs().get(&f.blob).map_err(|source| CheckpointError::Blob { name: f.path.clone(), source })?;
        let current = session.ws.resolve(&f.path).ok().and_then(|p| hash_file(&p).ok());
        if current != Some(f.blob) {
            session.ws.write(&f.path, &bytes).map_err(|message| RunError::Cell { cell_id: m.cell_id.clone(), message })?;
        }
    }
    let tasks = load_tasks(bundle.blobs(), m)?;
    session.register(&tasks.submitted);
    session.register(&tasks.computed);
    if !tasks.computed.is_empty() {
        session
            .run_tasks(&tasks.computed)
            .map_err(|e| RunError::Cell { cell_id: m.cell_id.clone(), message: e.to_string() })?;
    }
    Ok(())
}

/// Result of running a notebook without any bundle or cache.
#[derive(Debug)]
pub struct BaselineOutcome {
    pub state: KernelState,
    pub stdout: Vec<String>,
    pub outputs: BTreeMap<String, Digest>,
    pub stats: TaskStats,
    pub outcomes: Vec<TaskOutcome>,
}

/// Plain sequential execution with every task executed.
pub fn baseline_run(nb: &Notebook, ws: &Path, cfg: &RunConfig) -> Result<BaselineOutcome, RunError> {
    let asts = nb.parse_cells()?;
    let mut session = Session::new(
        Workspace::new(ws),
        Executor::new(cfg.exec.clone()),
        RewindManager::disabled(cfg.canonicalizer),
    );
    let mut state = KernelState::new();
    let mut stdout = Vec::new();
    let mut tracker = OutputTracker::default();
    for (cell, ast) in nb.cells.iter().zip(&asts) {
        let exec = eval_cell(&mut state, &cell.id, ast, &mut session)
            .map_err(|e| RunError::Cell { cell_id: cell.id.clone(), message: e.to_string() })?;
        let effects = session.take_effects();
        tracker.add(&effects.computed, effects.files.keys().cloned());
        stdout.push(exec.stdout);
    }
    Ok(BaselineOutcome {
        outputs: collect_outputs(&session.ws, &tracker.tasks, &tracker.files),
        state,
        stdout,
        stats: session.stats,
        outcomes: session.outcomes,
    })
}

/// Resolve a cell given by index or id against the audit.
pub fn cell_index(audit: &AuditRecord, cell: &str) -> Result<usize, RunError> {
    let idx = match cell.parse::<usize>() {
        Ok(i) => i,
        Err(_) => audit
            .cells
            .iter()
            .position(|c| c.cell_id == cell)
            .ok_or_else(|| RunError::Argument(format!("no audited cell `{cell}`")))?,
    };
    if idx >= audit.cells.len() {
        return Err(RunError::Argument(format!(
            "cell index {idx} out of range (the audit has {} cells)",
            audit.cells.len()
        )));
    }
    Ok(idx)
}

/// Kernel state as it was after cell `k` of the audit.
pub fn restore_to_cell(bundle_root: &Path, k: usize, ws: &Path, cfg: &RunConfig) -> Result<KernelState, RunError> {
    Ok(rollback(bundle_root, k, ws, cfg)?.state)
}

/// A kernel rolled back to a cell boundary, with the rest of the audited
/// notebook ready to run.
pub struct Rollback {
    pub state: KernelState,
    pub cell: usize,
    /// Cells after the restored one.
    pub suffix: Vec<Cell>,
    session: Session,
}

impl std::fmt::Debug for Rollback {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Rollback").field("cell", &self.cell).field("suffix", &self.suffix).finish_non_exhaustive()
    }
}

/// Restore the state after cell `k`. Tasks run later from the rolled-back
/// kernel execute without the cache, so the bundle is not written.
pub fn rollback(bundle_root: &Path, k: usize, ws: &Path, cfg: &RunConfig) -> Result<Rollback, RunError> {
    let bundle = Bundle::open(bundle_root)?;
    let audit = bundle.read_audit()?;
    if k >= audit.cells.len() {
        return Err(RunError::Argument(format!(
            "cell index {k} out of range (the audit has {} cells)",
            audit.cells.len()
        )));
    }
    let manifests = bundle.manifests(&audit)?;
    let meta = bundle.read_meta()?;
    let mut session = Session::new(
        Workspace::new(ws),
        Executor::new(cfg.exec.clone()),
        RewindManager::disabled(meta.config.canonicalizer),
    );
    let state = compose_state(&manifests[..=k], bundle.blobs(), &mut session)?;
    for m in &manifests[..=k] {
        let tasks = load_tasks(bundle.blobs(), m)?;
        session.register(&tasks.submitted);
        session.register(&tasks.computed);
    }
    let nb = Notebook::load(&bundle.notebook_path())?;
    Ok(Rollback { state, cell: k, suffix: nb.cells[k + 1..].to_vec(), session })
}

impl Rollback {
    /// Execute `cells` on the rolled-back state, returning their stdout.
    pub fn run(&mut self, cells: &[Cell]) -> Result<Vec<String>, RunError> {
        let nb = Notebook::new(cells.to_vec());
        let asts: Vec<CellAst> = nb.parse_cells()?;
        let mut out = Vec::new();
        for (cell, ast) in cells.iter().zip(&asts) {
            let exec = eval_cell(&mut self.state, &cell.id, ast, &mut self.session)
                .map_err(|e| RunError::Cell { cell_id: cell.id.clone(), message: e.to_string() })?;
            self.session.take_effects();
            out.push(exec.stdout);
        }
        Ok(out)
    }

    pub fn workspace(&self) -> PathBuf {
        self.session.ws.root().to_path_buf()
    }
}
