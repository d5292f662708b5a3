//! The kernel's view of the outside world during a run: workspace files,
//! task submission and `compute`, backed by the executor and the manager.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use rewind_core::interp::Host;
use rewind_core::{build_dag, sha256, Data, Digest, TaskSpec};

use crate::executor::Executor;
use crate::manager::{RewindManager, TaskError, TaskOutcome, TaskStats};
use crate::workspace::Workspace;

/// What one cell did to the outside world.
#[derive(Debug, Default, Clone)]
pub struct CellEffects {
    pub submitted: Vec<Arc<TaskSpec>>,
    /// Every task resolved by this cell's `compute` calls, in order.
    pub computed: Vec<Arc<TaskSpec>>,
    /// Files written with `write_text`, with the digest of what was written.
    pub files: BTreeMap<String, Digest>,
}

pub struct Session {
    pub ws: Workspace,
    pub executor: Executor,
    pub manager: RewindManager,
    memo: HashMap<Digest, Data>,
    /// Every task submitted so far in the run, for finding the producers of
    /// input files.
    known: Vec<Arc<TaskSpec>>,
    pub stats: TaskStats,
    pub outcomes: Vec<TaskOutcome>,
    pub cell: CellEffects,
    /// The last task failure, kept with its structure for reporting.
    pub last_task_error: Option<String>,
}

impl Session {
    pub fn new(ws: Workspace, executor: Executor, manager: RewindManager) -> Self {
        Self {
            ws,
            executor,
            manager,
            memo: HashMap::new(),
            known: Vec::new(),
            stats: TaskStats::default(),
            outcomes: Vec::new(),
            cell: CellEffects::default(),
            last_task_error: None,
        }
    }

    /// Start recording effects for a new cell, returning the previous
    /// cell's.
    pub fn take_effects(&mut self) -> CellEffects {
        std::mem::take(&mut self.cell)
    }

    /// Make tasks created by a cell that was restored rather than executed
    /// known to later `compute` calls.
    pub fn register(&mut self, tasks: &[Arc<TaskSpec>]) {
        for t in tasks {
            if !self.known.iter().any(|k| k.id == t.id) {
                self.known.push(t.clone());
            }
        }
    }

    /// Resolve `tasks` plus everything they depend on: argument parents and
    /// known tasks that produce their input files.
    pub fn run_tasks(&mut self, tasks: &[Arc<TaskSpec>]) -> Result<Vec<Data>, TaskError> {
        let mut wanted: Vec<Arc<TaskSpec>> = Vec::new();
        let mut seen: BTreeSet<String> = BTreeSet::new();
        let mut stack: Vec<Arc<TaskSpec>> = tasks.to_vec();
        let producers: HashMap<&str, &Arc<TaskSpec>> =
            self.known.iter().flat_map(|t| t.outputs.iter().map(move |o| (o.as_str(), t))).collect();
        while let Some(t) = stack.pop() {
            if !seen.insert(t.id.clone()) {
                continue;
            }
            for input in &t.inputs {
                if let Some(p) = producers.get(input.as_str()) {
                    stack.push((*p).clone());
                }
            }
            stack.extend(t.arg_parents());
            wanted.push(t);
        }
        // Keep the caller's order first so the graph's tie-break follows
        // submission order.
        wanted.sort_by_key(|t| {
            tasks
                .iter()
                .position(|x| x.id == t.id)
                .or_else(|| self.known.iter().position(|x| x.id == t.id).map(|p| p + tasks.len()))
                .unwrap_or(usize::MAX)
        });
        let dag = build_dag(&wanted)?;
        let scheduled = self.executor.schedule(&dag, &self.ws, &mut self.manager, &mut self.memo)?;
        for o in &scheduled.outcomes {
            self.stats.record(o);
        }
        self.outcomes.extend(scheduled.outcomes);
        for id in &dag.order {
            let spec = &dag.nodes[id];
            if !self.cell.computed.iter().any(|c| c.id == spec.id) {
                self.cell.computed.push(spec.clone());
            }
        }
        Ok(tasks
            .iter()
            .map(|t| scheduled.results.get(&t.id).cloned().unwrap_or(Data::Unit))
            .collect())
    }
}

impl Host for Session {
    fn read_text(&mut self, path: &str) -> Result<String, String> {
        self.ws.read_text(path)
    }

    fn write_text(&mut self, path: &str, text: &str) -> Result<(), String> {
        self.ws.write(path, text.as_bytes())?;
        self.cell.files.insert(path.to_string(), sha256(text.as_bytes()));
        Ok(())
    }

    fn submit(&mut self, task: &Arc<TaskSpec>) -> Result<(), String> {
        self.register(std::slice::from_ref(task));
        if !self.cell.submitted.iter().any(|t| t.id == task.id) {
            self.cell.submitted.push(task.clone());
        }
        Ok(())
    }

    fn compute(&mut self, tasks: &[Arc<TaskSpec>]) -> Result<Vec<Data>, String> {
        self.run_tasks(tasks).map_err(|e| {
            let msg = e.to_string();
            self.last_task_error = Some(msg.clone());
            msg
        })
    }
}
