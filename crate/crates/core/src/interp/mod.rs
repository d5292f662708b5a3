//! The kernel: evaluation of cells against a [`KernelState`] with reference
//! semantics for lists and maps, plus the reverse memory index used to find
//! variables that share heap objects.

mod alias;
mod builtins;
mod eval;

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

pub use alias::{
    apply_sharing, observe, shared_closure, sharing_groups, ObsNode, Observation, Path, PathKey,
};
pub use eval::{call_fn, eval_cell, eval_cell_at};

use crate::encode::encode_data;
use crate::syntax::Pos;
use crate::task::TaskSpec;
use crate::value::{Data, FnDef, Handle, HeapId, Obj, StmtRef, Value};

/// Everything the interpreter needs from the outside world.
pub trait Host {
    fn read_text(&mut self, path: &str) -> Result<String, String>;
    fn write_text(&mut self, path: &str, text: &str) -> Result<(), String>;
    /// Called when a cell creates a task. Execution happens in `compute`.
    fn submit(&mut self, _task: &Arc<TaskSpec>) -> Result<(), String> {
        Ok(())
    }
    /// Run (or replay) the given tasks and return their results in order.
    fn compute(&mut self, tasks: &[Arc<TaskSpec>]) -> Result<Vec<Data>, String>;
}

/// A host with no file system and no task manager.
#[derive(Debug, Default, Clone, Copy)]
pub struct NoHost;

impl Host for NoHost {
    fn read_text(&mut self, path: &str) -> Result<String, String> {
        Err(format!("no file system available to read {path:?}"))
    }

    fn write_text(&mut self, path: &str, _text: &str) -> Result<(), String> {
        Err(format!("no file system available to write {path:?}"))
    }

    fn submit(&mut self, _task: &Arc<TaskSpec>) -> Result<(), String> {
        Err(String::from("tasks cannot be created here"))
    }

    fn compute(&mut self, _tasks: &[Arc<TaskSpec>]) -> Result<Vec<Data>, String> {
        Err(String::from("no task manager available"))
    }
}

/// Provenance of the most recent binding of a variable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Origin {
    pub stmt: StmtRef,
    pub source: String,
    /// Globals the binding statement read.
    pub deps: Vec<String>,
}

#[derive(Debug, Clone, Default)]
pub struct KernelState {
    env: BTreeMap<String, Value>,
    heap: BTreeMap<HeapId, Obj>,
    next_id: HeapId,
    index: BTreeMap<HeapId, BTreeSet<String>>,
    origins: BTreeMap<String, Origin>,
    stdout: String,
}

impl KernelState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, name: &str) -> Option<&Value> {
        self.env.get(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.env.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.env.keys()
    }

    pub fn env(&self) -> &BTreeMap<String, Value> {
        &self.env
    }

    pub fn obj(&self, id: HeapId) -> Option<&Obj> {
        self.heap.get(&id)
    }

    pub(crate) fn obj_mut(&mut self, id: HeapId) -> Option<&mut Obj> {
        self.heap.get_mut(&id)
    }

    pub fn alloc(&mut self, obj: Obj) -> HeapId {
        let id = self.next_id;
        self.next_id += 1;
        self.heap.insert(id, obj);
        id
    }

    /// Bind (or rebind) a top-level name, keeping the reverse index exact.
    pub fn bind(&mut self, name: &str, value: Value) {
        if let Some(old) = self.env.get(name).and_then(Value::heap_id) {
            if let Some(names) = self.index.get_mut(&old) {
                names.remove(name);
                if names.is_empty() {
                    self.index.remove(&old);
                }
            }
        }
        if let Some(id) = value.heap_id() {
            self.index.entry(id).or_default().insert(String::from(name));
        }
        self.env.insert(String::from(name), value);
    }

    /// Top-level names currently bound to each heap object.
    pub fn reverse_index(&self) -> &BTreeMap<HeapId, BTreeSet<String>> {
        &self.index
    }

    /// The reverse index rebuilt from scratch; equal to
    /// [`reverse_index`](Self::reverse_index) at all times.
    pub fn recompute_index(&self) -> BTreeMap<HeapId, BTreeSet<String>> {
        let mut out: BTreeMap<HeapId, BTreeSet<String>> = BTreeMap::new();
        for (name, v) in &self.env {
            if let Some(id) = v.heap_id() {
                out.entry(id).or_default().insert(name.clone());
            }
        }
        out
    }

    pub fn origin(&self, name: &str) -> Option<&Origin> {
        self.origins.get(name)
    }

    pub fn set_origin(&mut self, name: &str, origin: Origin) {
        self.origins.insert(String::from(name), origin);
    }

    pub fn stdout(&self) -> &str {
        &self.stdout
    }

    pub(crate) fn stdout_mut(&mut self) -> &mut String {
        &mut self.stdout
    }

    /// Function table: every name bound to a function value.
    pub fn fns(&self) -> BTreeMap<String, Arc<FnDef>> {
        self.env
            .iter()
            .filter_map(|(k, v)| match v {
                Value::Fn(def) => Some((k.clone(), def.clone())),
                _ => None,
            })
            .collect()
    }

    /// Deep copy of a value out of the heap. Fails on handles and cycles.
    pub fn to_data(&self, v: &Value) -> Result<Data, SerializeError> {
        let mut stack = Vec::new();
        self.to_data_inner(v, &mut stack)
    }

    fn to_data_inner(&self, v: &Value, stack: &mut Vec<HeapId>) -> Result<Data, SerializeError> {
        Ok(match v {
            Value::Unit => Data::Unit,
            Value::Bool(b) => Data::Bool(*b),
            Value::Int(i) => Data::Int(*i),
            Value::Float(f) => Data::Float(*f),
            Value::Str(s) => Data::Str(String::from(&**s)),
            Value::Fn(def) => Data::Fn(def.clone()),
            Value::Task(t) => Data::Task(t.clone()),
            Value::Handle(h) => return Err(SerializeError::NonSerializable(h.origin.clone())),
            Value::List(id) | Value::Map(id) => {
                if stack.contains(id) {
                    return Err(SerializeError::Cycle);
                }
                stack.push(*id);
                let out = match self.heap.get(id).ok_or(SerializeError::Dangling(*id))? {
                    Obj::List(items) => Data::List(
                        items.iter().map(|i| self.to_data_inner(i, stack)).collect::<Result<_, _>>()?,
                    ),
                    Obj::Map(m) => Data::Map(
                        m.iter()
                            .map(|(k, i)| Ok((k.clone(), self.to_data_inner(i, stack)?)))
                            .collect::<Result<_, _>>()?,
                    ),
                };
                stack.pop();
                out
            }
        })
    }

    /// Materialize a data tree as fresh heap objects.
    pub fn from_data(&mut self, d: &Data) -> Value {
        match d {
            Data::Unit => Value::Unit,
            Data::Bool(b) => Value::Bool(*b),
            Data::Int(i) => Value::Int(*i),
            Data::Float(f) => Value::Float(*f),
            Data::Str(s) => Value::str(s),
            Data::Fn(def) => Value::Fn(def.clone()),
            Data::Task(t) => Value::Task(t.clone()),
            Data::List(items) => {
                let vals = items.iter().map(|i| self.from_data(i)).collect();
                Value::List(self.alloc(Obj::List(vals)))
            }
            Data::Map(m) => {
                let vals = m.iter().map(|(k, i)| (k.clone(), self.from_data(i))).collect();
                Value::Map(self.alloc(Obj::Map(vals)))
            }
        }
    }

    /// Heap objects reachable from `v` (including its own), without repeats.
    pub fn reachable(&self, v: &Value) -> BTreeSet<HeapId> {
        let mut seen = BTreeSet::new();
        let mut stack: Vec<HeapId> = v.heap_id().into_iter().collect();
        while let Some(id) = stack.pop() {
            if !seen.insert(id) {
                continue;
            }
            match self.heap.get(&id) {
                Some(Obj::List(items)) => stack.extend(items.iter().filter_map(Value::heap_id)),
                Some(Obj::Map(m)) => stack.extend(m.values().filter_map(Value::heap_id)),
                None => {}
            }
        }
        seen
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SerializeError {
    #[error("value holds a live resource created by {0}")]
    NonSerializable(StmtRef),
    #[error("value contains a reference cycle")]
    Cycle,
    #[error("dangling heap reference {0}")]
    Dangling(HeapId),
}

/// Canonical bytes of a value, or why it cannot be serialized.
pub fn serialize_value(state: &KernelState, v: &Value) -> Result<Vec<u8>, SerializeError> {
    Ok(encode_data(&state.to_data(v)?))
}

/// If `v` (deeply) holds a handle, the statement that created the first one.
pub fn handle_origin(state: &KernelState, v: &Value) -> Option<StmtRef> {
    if let Value::Handle(Handle { origin, .. }) = v {
        return Some(origin.clone());
    }
    for id in state.reachable(v) {
        let vals: Vec<&Value> = match state.obj(id)? {
            Obj::List(items) => items.iter().collect(),
            Obj::Map(m) => m.values().collect(),
        };
        for x in vals {
            if let Value::Handle(h) = x {
                return Some(h.origin.clone());
            }
        }
    }
    None
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuntimeError {
    pub stmt: Option<StmtRef>,
    pub pos: Option<Pos>,
    pub message: String,
}

impl RuntimeError {
    pub fn new(message: impl Into<String>) -> Self {
        Self { stmt: None, pos: None, message: message.into() }
    }
}

impl fmt::Display for RuntimeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.stmt, &self.pos) {
            (Some(s), Some(p)) => write!(f, "{s} (line {}, col {}): {}", p.line, p.col, self.message),
            (Some(s), None) => write!(f, "{s}: {}", self.message),
            _ => f.write_str(&self.message),
        }
    }
}

impl core::error::Error for RuntimeError {}

/// What one cell execution did, observed at runtime.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExecResult {
    pub mutated_heap_ids: BTreeSet<HeapId>,
    pub writes_observed: BTreeSet<String>,
    /// Globals looked up during execution, including those reached through
    /// function bodies.
    pub reads_observed: BTreeSet<String>,
    pub stdout: String,
    pub tasks_submitted: Vec<String>,
}
