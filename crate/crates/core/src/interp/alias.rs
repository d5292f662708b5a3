//! Alias queries over the kernel heap.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::KernelState;
use crate::value::{Data, HeapId, Obj, Value};

/// Every bound name connected to `names` through shared heap objects.
///
/// Containment edges are followed in both directions, restricted to objects
/// still reachable from some variable, so two names are connected exactly
/// when a chain of variables with overlapping reachable objects links them.
/// Unbound names are dropped; bound names are always in their own closure.
pub fn shared_closure<'a>(state: &KernelState, names: impl IntoIterator<Item = &'a String>) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    let mut frontier = Vec::new();
    for n in names {
        if let Some(v) = state.get(n) {
            out.insert(n.clone());
            frontier.extend(v.heap_id());
        }
    }
    if frontier.is_empty() {
        return out;
    }
    let mut live = BTreeSet::new();
    for v in state.env.values() {
        live.extend(state.reachable(v));
    }
    let mut edges: BTreeMap<HeapId, Vec<HeapId>> = BTreeMap::new();
    for (id, obj) in state.heap.iter().filter(|(id, _)| live.contains(*id)) {
        for child in children(obj) {
            edges.entry(*id).or_default().push(child);
            edges.entry(child).or_default().push(*id);
        }
    }
    let mut seen = BTreeSet::new();
    while let Some(id) = frontier.pop() {
        if !seen.insert(id) {
            continue;
        }
        if let Some(bound) = state.index.get(&id) {
            out.extend(bound.iter().cloned());
        }
        if let Some(next) = edges.get(&id) {
            frontier.extend(next.iter().filter(|n| !seen.contains(n)));
        }
    }
    out
}

fn children(obj: &Obj) -> Vec<HeapId> {
    match obj {
        Obj::List(items) => items.iter().filter_map(Value::heap_id).collect(),
        Obj::Map(m) => m.values().filter_map(Value::heap_id).collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PathKey {
    Index(usize),
    Key(String),
}

/// A location inside the environment: a variable plus container steps.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Path {
    pub var: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub keys: Vec<PathKey>,
}

/// Groups of locations among `names` that hold the same heap object. The
/// first path of each group is the one reached first in name order; the
/// others were not descended into.
pub fn sharing_groups<'a>(state: &KernelState, names: impl IntoIterator<Item = &'a String>) -> Vec<Vec<Path>> {
    let mut first: BTreeMap<HeapId, usize> = BTreeMap::new();
    let mut groups: Vec<Vec<Path>> = Vec::new();
    let mut sorted: Vec<&String> = names.into_iter().collect();
    sorted.sort();
    sorted.dedup();
    for name in sorted {
        let Some(v) = state.get(name) else { continue };
        let root = Path { var: name.clone(), keys: Vec::new() };
        walk(state, v, root, &mut first, &mut groups);
    }
    groups.retain(|g| g.len() > 1);
    groups
}

fn walk(state: &KernelState, v: &Value, path: Path, first: &mut BTreeMap<HeapId, usize>, groups: &mut Vec<Vec<Path>>) {
    let Some(id) = v.heap_id() else { return };
    if let Some(&g) = first.get(&id) {
        groups[g].push(path);
        return;
    }
    first.insert(id, groups.len());
    groups.push(alloc::vec![path.clone()]);
    let step = |k: PathKey| {
        let mut p = path.clone();
        p.keys.push(k);
        p
    };
    match state.obj(id) {
        Some(Obj::List(items)) => {
            for (i, item) in items.iter().enumerate() {
                walk(state, item, step(PathKey::Index(i)), first, groups);
            }
        }
        Some(Obj::Map(m)) => {
            for (k, item) in m {
                walk(state, item, step(PathKey::Key(k.clone())), first, groups);
            }
        }
        None => {}
    }
}

fn resolve(state: &KernelState, path: &Path) -> Option<Value> {
    let mut v = state.get(&path.var)?.clone();
    for k in &path.keys {
        v = match (state.obj(v.heap_id()?)?, k) {
            (Obj::List(items), PathKey::Index(i)) => items.get(*i)?.clone(),
            (Obj::Map(m), PathKey::Key(key)) => m.get(key)?.clone(),
            _ => return None,
        };
    }
    Some(v)
}

/// Make every path of each group refer to the object at its first path.
/// Groups whose paths do not resolve are skipped; returns how many were
/// applied.
pub fn apply_sharing(state: &mut KernelState, groups: &[Vec<Path>]) -> usize {
    let mut applied = 0;
    for group in groups {
        let Some((head, rest)) = group.split_first() else { continue };
        let Some(target) = resolve(state, head) else { continue };
        let mut ok = true;
        for p in rest {
            ok &= set_path(state, p, target.clone());
        }
        applied += ok as usize;
    }
    applied
}

fn set_path(state: &mut KernelState, path: &Path, v: Value) -> bool {
    let Some((last, init)) = path.keys.split_last() else {
        if !state.contains(&path.var) {
            return false;
        }
        state.bind(&path.var, v);
        return true;
    };
    let parent = Path { var: path.var.clone(), keys: init.to_vec() };
    let Some(id) = resolve(state, &parent).and_then(|p| p.heap_id()) else { return false };
    match (state.obj_mut(id), last) {
        (Some(Obj::List(items)), PathKey::Index(i)) if *i < items.len() => {
            items[*i] = v;
            true
        }
        (Some(Obj::Map(m)), PathKey::Key(k)) if m.contains_key(k) => {
            m.insert(k.clone(), v);
            true
        }
        _ => false,
    }
}

/// Shape of a value with heap identities replaced by first-visit numbers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ObsNode {
    Leaf(Data),
    Handle(String),
    List(usize, Vec<ObsNode>),
    Map(usize, BTreeMap<String, ObsNode>),
    Seen(usize),
}

/// What a program can observe about a set of variables: their contents and
/// which of their parts are the same object. Two states with equal
/// observations are indistinguishable to later cells that only use these
/// names.
pub type Observation = BTreeMap<String, ObsNode>;

pub fn observe<'a>(state: &KernelState, names: impl IntoIterator<Item = &'a String>) -> Observation {
    let mut sorted: Vec<&String> = names.into_iter().collect();
    sorted.sort();
    sorted.dedup();
    let mut ids = BTreeMap::new();
    let mut out = Observation::new();
    for name in sorted {
        if let Some(v) = state.get(name) {
            out.insert(name.clone(), obs(state, v, &mut ids));
        }
    }
    out
}

fn obs(state: &KernelState, v: &Value, ids: &mut BTreeMap<HeapId, usize>) -> ObsNode {
    match v {
        Value::Handle(h) => ObsNode::Handle(h.uri.clone()),
        Value::List(id) | Value::Map(id) => {
            if let Some(n) = ids.get(id) {
                return ObsNode::Seen(*n);
            }
            let n = ids.len();
            ids.insert(*id, n);
            match state.obj(*id) {
                Some(Obj::List(items)) => ObsNode::List(n, items.iter().map(|i| obs(state, i, ids)).collect()),
                Some(Obj::Map(m)) => ObsNode::Map(n, m.iter().map(|(k, i)| (k.clone(), obs(state, i, ids))).collect()),
                None => ObsNode::Leaf(Data::Unit),
            }
        }
        scalar => ObsNode::Leaf(state.to_data(scalar).unwrap_or(Data::Unit)),
    }
}
