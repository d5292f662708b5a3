//! Manager-worker execution of a task graph over a shared workspace.
//!
//! The scheduler thread walks the graph in dependency order, asks the
//! [`RewindManager`] for cache hits, and hands misses to a fixed pool of
//! worker threads. Each worker stages the task's declared inputs into a
//! private sandbox directory and runs it there; the scheduler copies
//! declared outputs back, so workspace writes are serialized.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::mpsc;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use rewind_core::interp::{call_fn, Host, KernelState};
use rewind_core::syntax::parse_fn_def;
use rewind_core::{Data, Digest, TaskDag, TaskKind, TaskSpec, Value};

use crate::manager::{command_result, OutcomeKind, RewindManager, TaskError, TaskOutcome};
use crate::workspace::{copy_creating_dirs, write_creating_dirs, Workspace};

#[derive(Debug, Clone)]
pub struct ExecConfig {
    pub workers: usize,
    /// Artificial delay before each executed task.
    pub task_delay_ms: u64,
    /// Stage inputs into a private directory per task. When off, tasks run
    /// directly in the workspace.
    pub sandbox: bool,
    pub sandbox_root: Option<PathBuf>,
}

impl Default for ExecConfig {
    fn default() -> Self {
        Self { workers: 2, task_delay_ms: 0, sandbox: true, sandbox_root: None }
    }
}

/// When a task ran, relative to the executor's creation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEvent {
    pub task_id: String,
    pub worker: usize,
    pub start: Duration,
    pub end: Duration,
}

pub struct Executor {
    config: ExecConfig,
    epoch: Instant,
    invocations: AtomicUsize,
    trace: Mutex<Vec<TraceEvent>>,
}

/// Everything one `schedule` call resolved.
#[derive(Debug, Default)]
pub struct Scheduled {
    /// Result of every node in the graph, by task id.
    pub results: BTreeMap<String, Data>,
    /// Fingerprint of every node in the graph, by task id.
    pub fingerprints: BTreeMap<String, Digest>,
    /// Newly resolved tasks, in resolution order. Tasks answered from the
    /// session memo are not repeated here.
    pub outcomes: Vec<TaskOutcome>,
}

struct Job {
    pos: usize,
    spec: Arc<TaskSpec>,
    args: Vec<Data>,
    dir: PathBuf,
}

struct Done {
    pos: usize,
    dir: PathBuf,
    outcome: Result<(Data, u64), TaskError>,
}

static SANDBOX_COUNTER: AtomicU64 = AtomicU64::new(0);

impl Executor {
    pub fn new(config: ExecConfig) -> Self {
        Self { config, epoch: Instant::now(), invocations: AtomicUsize::new(0), trace: Mutex::new(Vec::new()) }
    }

    pub fn config(&self) -> &ExecConfig {
        &self.config
    }

    /// Number of tasks handed to workers so far.
    pub fn invocations(&self) -> usize {
        self.invocations.load(Ordering::SeqCst)
    }

    pub fn trace(&self) -> Vec<TraceEvent> {
        self.trace.lock().expect("trace lock").clone()
    }

    fn sandbox_dir(&self, ws: &Workspace, spec: &TaskSpec) -> PathBuf {
        if !self.config.sandbox {
            return ws.root().to_path_buf();
        }
        let root = self
            .config
            .sandbox_root
            .clone()
            .unwrap_or_else(|| std::env::temp_dir().join("rewind-sandbox"));
        root.join(format!(
            "{}-{}-{}",
            std::process::id(),
            SANDBOX_COUNTER.fetch_add(1, Ordering::Relaxed),
            spec.id
        ))
    }

    /// Resolve every node of `dag`. `memo` maps fingerprints to results
    /// already produced in this session; it is extended with new results.
    ///
    /// A failing task stops its descendants from being scheduled; other
    /// branches finish, then the first failure is returned.
    pub fn schedule(
        &self,
        dag: &TaskDag,
        ws: &Workspace,
        manager: &mut RewindManager,
        memo: &mut HashMap<Digest, Data>,
    ) -> Result<Scheduled, TaskError> {
        let order: Vec<Arc<TaskSpec>> = dag.order.iter().map(|id| dag.nodes[id].clone()).collect();
        let pos_of: HashMap<&str, usize> = dag.order.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
        let children = dag.children();
        let mut waiting: Vec<usize> = dag.order.iter().map(|id| dag.parents.get(id).map_or(0, BTreeSet::len)).collect();
        let mut ready: BTreeSet<usize> = (0..order.len()).filter(|&i| waiting[i] == 0).collect();
        let mut out = Scheduled::default();
        let mut blocked: BTreeSet<usize> = BTreeSet::new();
        let mut first_failure: Option<TaskError> = None;
        let mut fps: Vec<Option<Digest>> = vec![None; order.len()];
        let workers = self.config.workers.max(1);

        std::thread::scope(|scope| -> Result<(), TaskError> {
            let (job_tx, job_rx) = mpsc::channel::<Job>();
            let job_rx = Arc::new(Mutex::new(job_rx));
            let (done_tx, done_rx) = mpsc::channel::<Done>();
            for w in 0..workers {
                let job_rx = Arc::clone(&job_rx);
                let done_tx = done_tx.clone();
                let ws = ws.clone();
                scope.spawn(move || loop {
                    let job = match job_rx.lock().expect("job queue").recv() {
                        Ok(j) => j,
                        Err(_) => break,
                    };
                    let outcome = self.run_job(w, &job, &ws);
                    if done_tx.send(Done { pos: job.pos, dir: job.dir, outcome }).is_err() {
                        break;
                    }
                });
            }
            drop(done_tx);

            let mut in_flight = 0usize;
            let release = |pos: usize, waiting: &mut Vec<usize>, ready: &mut BTreeSet<usize>, blocked: &BTreeSet<usize>| {
                if let Some(kids) = children.get(&order[pos].id) {
                    for k in kids {
                        let kp = pos_of[k.as_str()];
                        waiting[kp] -= 1;
                        if waiting[kp] == 0 && !blocked.contains(&kp) {
                            ready.insert(kp);
                        }
                    }
                }
            };
            let block_descendants = |pos: usize, blocked: &mut BTreeSet<usize>, ready: &mut BTreeSet<usize>| {
                let mut stack = vec![order[pos].id.clone()];
                while let Some(id) = stack.pop() {
                    for k in children.get(&id).into_iter().flatten() {
                        let kp = pos_of[k.as_str()];
                        if blocked.insert(kp) {
                            ready.remove(&kp);
                            stack.push(k.clone());
                        }
                    }
                }
            };

            loop {
                while let Some(pos) = ready.pop_first() {
                    let spec = &order[pos];
                    let parent_fps: BTreeMap<String, Digest> = dag
                        .parents
                        .get(&spec.id)
                        .into_iter()
                        .flatten()
                        .filter_map(|p| out.fingerprints.get(p).map(|d| (p.clone(), *d)))
                        .collect();
                    let fp = match manager.fingerprint(spec, ws, &parent_fps) {
                        Ok(fp) => fp,
                        Err(e) => {
                            first_failure.get_or_insert(e);
                            block_descendants(pos, &mut blocked, &mut ready);
                            continue;
                        }
                    };
                    fps[pos] = Some(fp);
                    out.fingerprints.insert(spec.id.clone(), fp);
                    if let Some(result) = memo.get(&fp) {
                        out.results.insert(spec.id.clone(), result.clone());
                        release(pos, &mut waiting, &mut ready, &blocked);
                        continue;
                    }
                    if let Some(result) = manager.lookup(spec, &fp, ws) {
                        out.outcomes.push(TaskOutcome {
                            task_id: spec.id.clone(),
                            fingerprint: fp,
                            kind: OutcomeKind::Cached,
                            outputs: spec.outputs.clone(),
                        });
                        memo.insert(fp, result.clone());
                        out.results.insert(spec.id.clone(), result);
                        release(pos, &mut waiting, &mut ready, &blocked);
                        continue;
                    }
                    let args = match &spec.kind {
                        TaskKind::Function { args, .. } => args.iter().map(|a| substitute(a, &out.results)).collect(),
                        TaskKind::Command { .. } => Vec::new(),
                    };
                    let job = Job { pos, spec: spec.clone(), args, dir: self.sandbox_dir(ws, spec) };
                    job_tx.send(job).expect("workers alive");
                    in_flight += 1;
                }
                if in_flight == 0 {
                    break;
                }
                let done = done_rx.recv().expect("workers alive");
                in_flight -= 1;
                let spec = &order[done.pos];
                let fp = fps[done.pos].expect("fingerprinted before dispatch");
                let completed = done.outcome.and_then(|(result, ms)| {
                    manager.complete(spec, fp, &done.dir, ws, &result, ms)?;
                    Ok(result)
                });
                if self.config.sandbox {
                    let _ = fs::remove_dir_all(&done.dir);
                }
                match completed {
                    Ok(result) => {
                        out.outcomes.push(TaskOutcome {
                            task_id: spec.id.clone(),
                            fingerprint: fp,
                            kind: OutcomeKind::Executed,
                            outputs: spec.outputs.clone(),
                        });
                        memo.insert(fp, result.clone());
                        out.results.insert(spec.id.clone(), result);
                        release(done.pos, &mut waiting, &mut ready, &blocked);
                    }
                    Err(e) => {
                        first_failure.get_or_insert(e);
                        block_descendants(done.pos, &mut blocked, &mut ready);
                    }
                }
            }
            drop(job_tx);
            Ok(())
        })?;

        match first_failure {
            Some(e) => Err(e),
            None => Ok(out),
        }
    }

    fn run_job(&self, worker: usize, job: &Job, ws: &Workspace) -> Result<(Data, u64), TaskError> {
        self.invocations.fetch_add(1, Ordering::SeqCst);
        if self.config.task_delay_ms > 0 {
            std::thread::sleep(Duration::from_millis(self.config.task_delay_ms));
        }
        let start = self.epoch.elapsed();
        let result = self.stage(job, ws).and_then(|()| match &job.spec.kind {
            TaskKind::Command { command } => run_command(&job.spec, command, &job.dir),
            TaskKind::Function { fname, sources, .. } => run_function(&job.spec, fname, sources, &job.args, &job.dir),
        });
        let end = self.epoch.elapsed();
        self.trace.lock().expect("trace lock").push(TraceEvent {
            task_id: job.spec.id.clone(),
            worker,
            start,
            end,
        });
        result.map(|d| (d, (end - start).as_millis() as u64))
    }

    /// Copy declared inputs into the sandbox and create the parents of
    /// declared outputs.
    fn stage(&self, job: &Job, ws: &Workspace) -> Result<(), TaskError> {
        let spec = &job.spec;
        let io = |path: &str, e: std::io::Error| TaskError::Input { task: spec.id.clone(), path: path.into(), message: e.to_string() };
        if self.config.sandbox {
            fs::create_dir_all(&job.dir).map_err(|e| io(".", e))?;
            for rel in &spec.inputs {
                let src = ws.resolve(rel).map_err(|m| TaskError::Input { task: spec.id.clone(), path: rel.clone(), message: m })?;
                copy_creating_dirs(&src, &job.dir.join(rel)).map_err(|e| io(rel, e))?;
            }
        }
        for rel in &spec.outputs {
            if let Some(parent) = job.dir.join(rel).parent() {
                fs::create_dir_all(parent).map_err(|e| io(rel, e))?;
            }
        }
        Ok(())
    }
}

/// Replace task placeholders in arguments with their parents' results.
fn substitute(d: &Data, results: &BTreeMap<String, Data>) -> Data {
    match d {
        Data::Task(t) => results.get(&t.id).cloned().unwrap_or(Data::Unit),
        Data::List(items) => Data::List(items.iter().map(|i| substitute(i, results)).collect()),
        Data::Map(m) => Data::Map(m.iter().map(|(k, v)| (k.clone(), substitute(v, results))).collect()),
        other => other.clone(),
    }
}

fn run_command(spec: &TaskSpec, command: &str, dir: &Path) -> Result<Data, TaskError> {
    let out = Command::new("sh")
        .arg("-c")
        .arg(command)
        .current_dir(dir)
        .output()
        .map_err(|e| TaskError::Runtime { task: spec.id.clone(), message: format!("cannot start shell: {e}") })?;
    if !out.status.success() {
        return Err(TaskError::Failed {
            task: spec.id.clone(),
            status: out.status.to_string(),
            stderr: String::from_utf8_lossy(&out.stderr).trim_end().to_string(),
        });
    }
    Ok(command_result(spec))
}

/// File access for function tasks, confined to the sandbox.
struct SandboxHost<'a> {
    dir: &'a Path,
}

impl Host for SandboxHost<'_> {
    fn read_text(&mut self, path: &str) -> Result<String, String> {
        Workspace::new(self.dir).read_text(path)
    }

    fn write_text(&mut self, path: &str, text: &str) -> Result<(), String> {
        let p = Workspace::new(self.dir).resolve(path)?;
        write_creating_dirs(&p, text.as_bytes()).map_err(|e| format!("cannot write {path}: {e}"))
    }

    fn submit(&mut self, _task: &Arc<TaskSpec>) -> Result<(), String> {
        Err(String::from("tasks cannot create tasks"))
    }

    fn compute(&mut self, _tasks: &[Arc<TaskSpec>]) -> Result<Vec<Data>, String> {
        Err(String::from("tasks cannot compute tasks"))
    }
}

fn run_function(
    spec: &TaskSpec,
    fname: &str,
    sources: &BTreeMap<String, String>,
    args: &[Data],
    dir: &Path,
) -> Result<Data, TaskError> {
    let fail = |message: String| TaskError::Runtime { task: spec.id.clone(), message };
    let mut state = KernelState::new();
    for src in sources.values() {
        let def = parse_fn_def(src).map_err(|e| fail(format!("captured source: {e}")))?;
        let name = def.name.clone();
        state.bind(&name, Value::Fn(def));
    }
    let def = match state.get(fname) {
        Some(Value::Fn(def)) => def.clone(),
        _ => return Err(fail(format!("function `{fname}` not captured"))),
    };
    let args: Vec<Value> = args.iter().map(|a| state.from_data(a)).collect();
    let v = call_fn(&mut state, &def, args, &mut SandboxHost { dir }).map_err(|e| fail(e.to_string()))?;
    state.to_data(&v).map_err(|e| fail(format!("return value: {e}")))
}
