//! Single-mutation fingerprint fuzzing over whole cells.
//!
//! A case is rendered into a cell that defines a function task and a command
//! task over a few input files. The cell is evaluated, the submitted specs
//! are fingerprinted against real files, then one mutation is applied and the
//! result compared.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use proptest::prelude::*;
use rewind::{RewindManager, Workspace};
use rewind_core::interp::eval_cell;
use rewind_core::{parse_cell, Canonicalizer, Data, Digest, Host, KernelState, TaskKind, TaskSpec};

#[derive(Debug, Clone)]
pub struct Case {
    pub k: i64,
    pub xs: Vec<i64>,
    pub map: Vec<(String, i64)>,
    pub map_order: Vec<usize>,
    pub uuid: String,
    pub cmd: &'static str,
    pub flag: u32,
    pub inputs: Vec<Vec<u8>>,
    pub input_order: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Mutation {
    Command,
    Source,
    Arg,
    InputByte,
    InputOrder,
    MapOrder,
    Uuid,
}

impl Mutation {
    pub const ALL: [Mutation; 7] = [
        Mutation::Command,
        Mutation::Source,
        Mutation::Arg,
        Mutation::InputByte,
        Mutation::InputOrder,
        Mutation::MapOrder,
        Mutation::Uuid,
    ];

    /// Whether (function task, command task) fingerprints must change.
    pub fn flips(self) -> (bool, bool) {
        match self {
            Mutation::Command => (false, true),
            Mutation::Source | Mutation::Arg => (true, false),
            Mutation::InputByte => (true, true),
            Mutation::InputOrder | Mutation::MapOrder | Mutation::Uuid => (false, false),
        }
    }
}

fn uuid() -> impl Strategy<Value = String> {
    "[0-9a-f]{8}-[0-9a-f]{4}-[0-9a-f]{4}-[0-9a-f]{4}-[0-9a-f]{12}"
}

fn permutation(n: usize) -> impl Strategy<Value = Vec<usize>> {
    Just((0..n).collect::<Vec<_>>()).prop_shuffle()
}

pub fn case() -> impl Strategy<Value = Case> {
    (
        -50i64..50,
        prop::collection::vec(-100i64..100, 1..4),
        prop::collection::btree_map("[a-z]{1,6}", -9i64..9, 1..5),
        uuid(),
        prop::sample::select(vec!["wc -l", "sort", "cat", "uniq -c", "head"]),
        1u32..20,
        prop::collection::vec(prop::collection::vec(any::<u8>(), 1..64), 1..4),
    )
        .prop_flat_map(|(k, xs, map, uuid, cmd, flag, inputs)| {
            let map: Vec<(String, i64)> = map.into_iter().collect();
            let (m, n) = (map.len(), inputs.len());
            (permutation(m), permutation(n)).prop_map(move |(map_order, input_order)| Case {
                k,
                xs: xs.clone(),
                map: map.clone(),
                map_order,
                uuid: uuid.clone(),
                cmd,
                flag,
                inputs: inputs.clone(),
                input_order,
            })
        })
}

pub fn mutated() -> impl Strategy<Value = (Case, Mutation, Case)> {
    (case(), prop::sample::select(Mutation::ALL.to_vec()), any::<prop::sample::Index>(), uuid()).prop_map(
        |(c, m, ix, new_uuid)| {
            let mut d = c.clone();
            match m {
                Mutation::Command => d.flag += 1,
                Mutation::Source => d.k += 1,
                Mutation::Arg => {
                    let i = ix.index(d.xs.len());
                    d.xs[i] += 1;
                }
                Mutation::InputByte => {
                    let f = ix.index(d.inputs.len());
                    let b = ix.index(d.inputs[f].len());
                    d.inputs[f][b] ^= 1 << (ix.index(8) as u8);
                }
                Mutation::InputOrder => d.input_order.reverse(),
                Mutation::MapOrder => d.map_order.reverse(),
                Mutation::Uuid => {
                    d.uuid = new_uuid;
                    if d.uuid == c.uuid {
                        let last = if c.uuid.ends_with('0') { '1' } else { '0' };
                        d.uuid.pop();
                        d.uuid.push(last);
                    }
                }
            }
            (c, m, d)
        },
    )
}

impl Case {
    fn input_names(&self) -> Vec<String> {
        self.input_order.iter().map(|i| format!("in/x{i}.txt")).collect()
    }

    pub fn code(&self) -> String {
        let quote = |s: &str| format!("{s:?}");
        let inputs: Vec<String> = self.input_names().iter().map(|s| quote(s)).collect();
        let inputs = format!("[{}]", inputs.join(", "));
        let xs: Vec<String> = self.xs.iter().map(i64::to_string).collect();
        let map: Vec<String> =
            self.map_order.iter().map(|&i| format!("{}: {}", quote(&self.map[i].0), self.map[i].1)).collect();
        let files: Vec<String> = (0..self.inputs.len()).map(|i| format!("in/x{i}.txt")).collect();
        let files = files.join(" ");
        format!(
            "fn helper(v) = v * {k}\n\
             fn f(xs, m, tag) = sum(xs) + helper(len(m))\n\
             t = task_fn(f, [[{xs}], {{{map}}}, \"run-{uuid}\"], {inputs})\n\
             c = task_cmd(\"{cmd} -n {flag} tmp-{uuid} {files} > out.txt\", {inputs}, [\"out.txt\"])",
            k = self.k,
            xs = xs.join(", "),
            map = map.join(", "),
            uuid = self.uuid,
            cmd = self.cmd,
            flag = self.flag,
        )
    }

    /// Fingerprints of the (function, command) tasks, with inputs written
    /// under `dir`.
    pub fn fingerprints(&self, dir: &Path) -> (Digest, Digest) {
        std::fs::create_dir_all(dir.join("in")).unwrap();
        for (i, bytes) in self.inputs.iter().enumerate() {
            std::fs::write(dir.join(format!("in/x{i}.txt")), bytes).unwrap();
        }
        let ast = parse_cell(&self.code()).unwrap_or_else(|e| panic!("{e}\n{}", self.code()));
        let mut host = Recorder::default();
        let mut state = KernelState::new();
        eval_cell(&mut state, "fuzz", &ast, &mut host).unwrap_or_else(|e| panic!("{e}\n{}", self.code()));
        let manager = RewindManager::disabled(Canonicalizer::default());
        let ws = Workspace::new(dir);
        let fp = |pick: fn(&TaskKind) -> bool| {
            let spec = host.tasks.iter().find(|t| pick(&t.kind)).expect("task submitted");
            manager.fingerprint(spec, &ws, &BTreeMap::new()).unwrap()
        };
        (fp(|k| matches!(k, TaskKind::Function { .. })), fp(|k| matches!(k, TaskKind::Command { .. })))
    }
}

#[derive(Default)]
struct Recorder {
    tasks: Vec<Arc<TaskSpec>>,
}

impl Host for Recorder {
    fn read_text(&mut self, path: &str) -> Result<String, String> {
        Err(format!("no file {path}"))
    }

    fn write_text(&mut self, _path: &str, _text: &str) -> Result<(), String> {
        Ok(())
    }

    fn submit(&mut self, task: &Arc<TaskSpec>) -> Result<(), String> {
        self.tasks.push(Arc::clone(task));
        Ok(())
    }

    fn compute(&mut self, _tasks: &[Arc<TaskSpec>]) -> Result<Vec<Data>, String> {
        Err(String::from("not computed"))
    }
}

/// Check one mutated pair; `Err` describes the violation.
pub fn check(original: &Case, m: Mutation, changed: &Case) -> Result<(), String> {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let (fa, ca) = original.fingerprints(a.path());
    let (fb, cb) = changed.fingerprints(b.path());
    let (want_fn, want_cmd) = m.flips();
    if (fa != fb) != want_fn {
        return Err(format!("{m:?}: function fingerprint changed = {}\n{}\n---\n{}", fa != fb, original.code(), changed.code()));
    }
    if (ca != cb) != want_cmd {
        return Err(format!("{m:?}: command fingerprint changed = {}\n{}\n---\n{}", ca != cb, original.code(), changed.code()));
    }
    Ok(())
}
