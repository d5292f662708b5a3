//! Task specifications, identifier canonicalization, fingerprints and DAG
//! construction.
//!
//! Fingerprints here are pure functions of the spec plus digests the caller
//! supplies (input file contents, parent fingerprints); reading files is the
//! caller's job.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::digest::{sha256, Digest};
use crate::encode::{encode_data, encode_for_fingerprint};
use crate::value::Data;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TaskKind {
    Command {
        command: String,
    },
    Function {
        fname: String,
        args: Vec<Data>,
        /// Definition text of `fname` and every user function it can reach,
        /// captured when the task was created.
        sources: BTreeMap<String, String>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskSpec {
    pub id: String,
    pub kind: TaskKind,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SpecError {
    #[error("path {0:?} is not a workspace-relative path")]
    BadPath(String),
    #[error("command task must declare at least one output")]
    NoOutputs,
    #[error("unknown function `{0}`")]
    UnknownFunction(String),
}

/// Accepts `a/b.txt`; rejects absolute paths, empty components, `.` and `..`.
pub fn validate_path(p: &str) -> Result<(), SpecError> {
    let ok = !p.is_empty()
        && !p.starts_with('/')
        && !p.contains('\\')
        && p.split('/').all(|c| !c.is_empty() && c != "." && c != "..");
    if ok {
        Ok(())
    } else {
        Err(SpecError::BadPath(p.to_string()))
    }
}

impl TaskSpec {
    pub fn command(command: &str, inputs: Vec<String>, outputs: Vec<String>) -> Result<Self, SpecError> {
        if outputs.is_empty() {
            return Err(SpecError::NoOutputs);
        }
        let kind = TaskKind::Command { command: command.to_string() };
        Self::with_derived_id(label_of(command), kind, inputs, outputs)
    }

    pub fn function(
        fname: &str,
        args: Vec<Data>,
        sources: BTreeMap<String, String>,
        inputs: Vec<String>,
        outputs: Vec<String>,
    ) -> Result<Self, SpecError> {
        if !sources.contains_key(fname) {
            return Err(SpecError::UnknownFunction(fname.to_string()));
        }
        let kind = TaskKind::Function { fname: fname.to_string(), args, sources };
        Self::with_derived_id(label_of(fname), kind, inputs, outputs)
    }

    /// Ids look like `label-1a2b3c4d`, the suffix drawn from the spec's
    /// content, so that identical specs share an id.
    fn with_derived_id(label: String, kind: TaskKind, inputs: Vec<String>, outputs: Vec<String>) -> Result<Self, SpecError> {
        for p in inputs.iter().chain(&outputs) {
            validate_path(p)?;
        }
        let mut spec = TaskSpec { id: String::new(), kind, inputs, outputs };
        let digest = sha256(&encode_data(&Data::Task(Arc::new(spec.clone()))));
        spec.id = format!("{label}-{}", &digest.to_hex()[..8]);
        Ok(spec)
    }

    pub fn label(&self) -> &str {
        match &self.kind {
            TaskKind::Command { command } => command,
            TaskKind::Function { fname, .. } => fname,
        }
    }

    /// Ids of tasks whose results are passed as arguments, in first-use order.
    pub fn arg_parents(&self) -> Vec<Arc<TaskSpec>> {
        let mut out: Vec<Arc<TaskSpec>> = Vec::new();
        if let TaskKind::Function { args, .. } = &self.kind {
            args.iter().for_each(|a| collect_tasks(a, &mut out));
        }
        out
    }
}

fn collect_tasks(d: &Data, out: &mut Vec<Arc<TaskSpec>>) {
    match d {
        Data::Task(t) => {
            if !out.iter().any(|o| o.id == t.id) {
                out.push(t.clone());
            }
        }
        Data::List(items) => items.iter().for_each(|i| collect_tasks(i, out)),
        Data::Map(m) => m.values().for_each(|i| collect_tasks(i, out)),
        _ => {}
    }
}

fn label_of(s: &str) -> String {
    let word: String = s
        .split_whitespace()
        .next()
        .unwrap_or("task")
        .chars()
        .filter(|c| c.is_ascii_alphanumeric() || *c == '_')
        .collect();
    if word.is_empty() {
        String::from("task")
    } else {
        word
    }
}

/// Configuration for stripping generated identifier suffixes before hashing.
///
/// A suffix is a dash-separated group of at least `min_hex_len` lowercase hex
/// characters, optionally followed by further dash-separated groups of at
/// least four hex characters (which covers UUIDs), at the end of an
/// identifier (a maximal run of `[A-Za-z0-9_-]`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Canonicalizer {
    pub min_hex_len: usize,
    /// Also canonicalize tokens of command strings, not only function-task
    /// arguments.
    pub commands: bool,
}

impl Default for Canonicalizer {
    fn default() -> Self {
        Self { min_hex_len: 8, commands: true }
    }
}

impl Canonicalizer {
    /// Only function-task arguments are canonicalized.
    pub fn strict() -> Self {
        Self { commands: false, ..Self::default() }
    }

    pub fn apply(&self, s: &str) -> String {
        let mut out = String::with_capacity(s.len());
        let mut start: Option<usize> = None;
        for (i, c) in s.char_indices() {
            let ident = c.is_ascii_alphanumeric() || c == '_' || c == '-';
            match (ident, start) {
                (true, None) => start = Some(i),
                (false, Some(st)) => {
                    out.push_str(self.strip_suffix(&s[st..i]));
                    out.push(c);
                    start = None;
                }
                (false, None) => out.push(c),
                (true, Some(_)) => {}
            }
        }
        if let Some(st) = start {
            out.push_str(self.strip_suffix(&s[st..]));
        }
        out
    }

    fn strip_suffix<'a>(&self, ident: &'a str) -> &'a str {
        let parts: Vec<&str> = ident.split('-').collect();
        let hex = |p: &str, min: usize| {
            p.len() >= min && p.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b))
        };
        for i in 1..parts.len() {
            let stem_len: usize = parts[..i].iter().map(|p| p.len() + 1).sum::<usize>() - 1;
            let stem = &ident[..stem_len];
            if stem.bytes().all(|b| b == b'-') {
                continue;
            }
            if hex(parts[i], self.min_hex_len) && parts[i + 1..].iter().all(|p| hex(p, 4)) {
                return stem;
            }
        }
        ident
    }

    pub fn command(&self, command: &str) -> String {
        if self.commands {
            self.apply(command)
        } else {
            command.to_string()
        }
    }
}

/// Strip generated suffixes with the default pattern.
pub fn canonicalize_token(s: &str) -> String {
    Canonicalizer::default().apply(s)
}

/// Fingerprint of a command task: SHA-256 of the compact, key-sorted JSON
/// record `{"command": ..., "inputs": {basename: sha256-hex}}`.
pub fn fingerprint_cmd(command: &str, inputs: &[(String, Digest)], canon: &Canonicalizer) -> Result<Digest, FingerprintError> {
    let mut seen: BTreeMap<&str, Digest> = BTreeMap::new();
    for (name, digest) in inputs {
        if seen.insert(name, *digest).is_some_and(|prev| prev != *digest) {
            return Err(FingerprintError::BasenameClash(name.clone()));
        }
    }
    Ok(sha256(command_record(command, inputs, canon).as_bytes()))
}

/// The exact JSON text hashed by [`fingerprint_cmd`].
pub fn command_record(command: &str, inputs: &[(String, Digest)], canon: &Canonicalizer) -> String {
    use serde_json::Value as J;
    let inputs: serde_json::Map<String, J> =
        inputs.iter().map(|(n, d)| (n.clone(), J::String(d.to_hex()))).collect();
    let mut record = serde_json::Map::new();
    record.insert(String::from("command"), J::String(canon.command(command)));
    record.insert(String::from("inputs"), J::Object(inputs));
    serde_json::to_string(&J::Object(record)).expect("json of strings")
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FingerprintError {
    #[error("two different inputs share the basename {0:?}")]
    BasenameClash(String),
    #[error("task {0} is not a {1} task")]
    WrongKind(String, &'static str),
}

/// Fingerprint of a function task.
///
/// The core digest covers the canonicalized argument encoding (task
/// arguments replaced by their parent's fingerprint) followed by the sorted
/// hex digests of every captured function source. The final digest is
/// SHA-256 of the core hex followed by the sorted input content digests.
pub fn fingerprint_fn(
    spec: &TaskSpec,
    input_digests: &[Digest],
    parent_fp: &dyn Fn(&TaskSpec) -> Digest,
    canon: &Canonicalizer,
) -> Result<Digest, FingerprintError> {
    let TaskKind::Function { fname, args, sources } = &spec.kind else {
        return Err(FingerprintError::WrongKind(spec.id.clone(), "function"));
    };
    let call = Data::List(alloc::vec![Data::Str(fname.clone()), Data::List(args.clone())]);
    let mut core = encode_for_fingerprint(&call, &|s| canon.apply(s), parent_fp);
    let mut src_digests: Vec<String> = sources.values().map(|s| sha256(s.as_bytes()).to_hex()).collect();
    src_digests.sort();
    for d in &src_digests {
        core.extend_from_slice(d.as_bytes());
    }
    let core = sha256(&core);
    let mut inputs: Vec<String> = input_digests.iter().map(Digest::to_hex).collect();
    inputs.sort();
    let mut fin = core.to_hex();
    for d in &inputs {
        fin.push_str(d);
    }
    Ok(sha256(fin.as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DagError {
    #[error("dependency cycle: {}", .0.join(" -> "))]
    Cycle(Vec<String>),
    #[error("tasks {first} and {second} both declare output {path:?}")]
    OutputConflict { path: String, first: String, second: String },
}

/// A validated task graph with a deterministic topological order.
#[derive(Debug, Clone, Default)]
pub struct TaskDag {
    pub nodes: BTreeMap<String, Arc<TaskSpec>>,
    pub parents: BTreeMap<String, BTreeSet<String>>,
    /// Topological order; ties broken by submission order.
    pub order: Vec<String>,
}

impl TaskDag {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn children(&self) -> BTreeMap<String, BTreeSet<String>> {
        let mut out: BTreeMap<String, BTreeSet<String>> = self.nodes.keys().map(|k| (k.clone(), BTreeSet::new())).collect();
        for (child, ps) in &self.parents {
            for p in ps {
                out.entry(p.clone()).or_default().insert(child.clone());
            }
        }
        out
    }

    /// `ids` and everything they transitively depend on.
    pub fn ancestors(&self, ids: &[String]) -> BTreeSet<String> {
        let mut seen = BTreeSet::new();
        let mut stack: Vec<String> = ids.to_vec();
        while let Some(id) = stack.pop() {
            if seen.insert(id.clone()) {
                if let Some(ps) = self.parents.get(&id) {
                    stack.extend(ps.iter().cloned());
                }
            }
        }
        seen
    }

    /// The induced subgraph on `keep`, preserving relative order. Parent
    /// edges to nodes outside `keep` are dropped.
    pub fn restrict(&self, keep: &BTreeSet<String>) -> TaskDag {
        TaskDag {
            nodes: self.nodes.iter().filter(|(k, _)| keep.contains(*k)).map(|(k, v)| (k.clone(), v.clone())).collect(),
            parents: self
                .parents
                .iter()
                .filter(|(k, _)| keep.contains(*k))
                .map(|(k, ps)| (k.clone(), ps.iter().filter(|p| keep.contains(*p)).cloned().collect()))
                .collect(),
            order: self.order.iter().filter(|k| keep.contains(*k)).cloned().collect(),
        }
    }
}

/// Build the graph over `submissions` (plus any task passed as an argument
/// to one of them). Parents come from task arguments and from tasks that
/// declare one of the task's inputs as an output.
pub fn build_dag(submissions: &[Arc<TaskSpec>]) -> Result<TaskDag, DagError> {
    let mut nodes: BTreeMap<String, Arc<TaskSpec>> = BTreeMap::new();
    let mut seq: Vec<String> = Vec::new();
    let mut stack: Vec<Arc<TaskSpec>> = submissions.iter().rev().cloned().collect();
    // Pre-order walk: arguments are registered right after their consumer
    // unless already present; order ties are resolved by Kahn below.
    while let Some(t) = stack.pop() {
        if nodes.contains_key(&t.id) {
            continue;
        }
        seq.push(t.id.clone());
        for p in t.arg_parents().into_iter().rev() {
            stack.push(p);
        }
        nodes.insert(t.id.clone(), t);
    }

    let mut producer: BTreeMap<&str, &str> = BTreeMap::new();
    for id in &seq {
        for out in &nodes[id].outputs {
            if let Some(first) = producer.insert(out, id) {
                return Err(DagError::OutputConflict { path: out.clone(), first: first.to_string(), second: id.clone() });
            }
        }
    }

    let mut parents: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for id in &seq {
        let spec = &nodes[id];
        let mut ps: BTreeSet<String> = spec.arg_parents().iter().map(|p| p.id.clone()).collect();
        for input in &spec.inputs {
            if let Some(p) = producer.get(input.as_str()) {
                ps.insert(p.to_string());
            }
        }
        parents.insert(id.clone(), ps);
    }

    let rank: BTreeMap<&str, usize> = seq.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    let mut pending: BTreeMap<&str, usize> = parents.iter().map(|(k, ps)| (k.as_str(), ps.len())).collect();
    let mut children: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for (child, ps) in &parents {
        for p in ps {
            children.entry(p.as_str()).or_default().push(child.as_str());
        }
    }
    let mut ready: BTreeSet<(usize, &str)> =
        pending.iter().filter(|(_, n)| **n == 0).map(|(k, _)| (rank[k], *k)).collect();
    let mut order = Vec::with_capacity(seq.len());
    while let Some(first) = ready.pop_first() {
        let (_, id) = first;
        order.push(id.to_string());
        for c in children.get(id).map(Vec::as_slice).unwrap_or(&[]) {
            let n = pending.get_mut(c).expect("child is a node");
            *n -= 1;
            if *n == 0 {
                ready.insert((rank[c], c));
            }
        }
    }
    if order.len() != seq.len() {
        return Err(DagError::Cycle(find_cycle(&parents, &order)));
    }
    Ok(TaskDag { nodes, parents, order })
}

fn find_cycle(parents: &BTreeMap<String, BTreeSet<String>>, done: &[String]) -> Vec<String> {
    let done: BTreeSet<&String> = done.iter().collect();
    // Every remaining node has a remaining parent; walk parents until a
    // node repeats.
    let start = parents.keys().find(|k| !done.contains(k)).expect("cycle exists");
    let mut path: Vec<&String> = alloc::vec![start];
    loop {
        let cur = path[path.len() - 1];
        let next = parents[cur].iter().find(|p| !done.contains(p)).expect("remaining parent");
        if let Some(pos) = path.iter().position(|p| *p == next) {
            let mut cycle: Vec<String> = path[pos..].iter().rev().map(|s| (*s).clone()).collect();
            cycle.push(next.clone());
            return cycle;
        }
        path.push(next);
    }
}

#[cfg(test)]
mod tests;
