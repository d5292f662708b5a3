//! Static read/write analysis of cells.

use alloc::collections::BTreeSet;
use alloc::string::String;

use crate::syntax::{CellAst, Expr, NameClass, Statement, StmtKind};

/// Names the interpreter provides. They are never checkpointed and never
/// appear in [`RwInfo`].
pub const BUILTINS: &[&str] = &[
    "read_text", "write_text", "lines", "split", "len", "sum", "upper", "show", "connect",
    "task_cmd", "task_fn", "compute",
    "lower", "words", "trim", "join", "str", "int", "float", "range", "keys", "values", "get",
    "has", "map", "filter", "sorted", "tally", "merge_counts", "min", "max", "mean", "slice",
    "grid", "render", "convolve", "zip", "product",
];

pub fn is_builtin(name: &str) -> bool {
    BUILTINS.contains(&name)
}

/// Variables a cell touches.
///
/// `reads` is conservative: every global referenced anywhere in the cell,
/// plus mutation targets. `free_reads` is the subset whose value flows in
/// from earlier cells (referenced before any write in this cell).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RwInfo {
    pub reads: BTreeSet<String>,
    pub free_reads: BTreeSet<String>,
    pub writes: BTreeSet<String>,
    pub defs: BTreeSet<String>,
}

impl RwInfo {
    /// reads ∪ writes ∪ defs.
    pub fn touched(&self) -> BTreeSet<String> {
        self.reads.iter().chain(&self.writes).chain(&self.defs).cloned().collect()
    }
}

pub fn analyze_rw(ast: &CellAst) -> RwInfo {
    let mut info = RwInfo::default();
    let mut bound: BTreeSet<String> = BTreeSet::new();
    for stmt in &ast.statements {
        let s = analyze_statement(stmt);
        for r in &s.reads {
            if !bound.contains(r) {
                info.free_reads.insert(r.clone());
            }
        }
        bound.extend(s.writes.iter().cloned());
        bound.extend(s.defs.iter().cloned());
        info.reads.extend(s.reads);
        info.writes.extend(s.writes);
        info.defs.extend(s.defs);
    }
    info
}

/// Read/write sets of one statement in isolation (`free_reads == reads`).
pub fn analyze_statement(stmt: &Statement) -> RwInfo {
    let mut info = RwInfo::default();
    match &stmt.kind {
        StmtKind::Assign { target, value } => {
            globals(value, &mut info.reads);
            info.writes.insert(target.clone());
        }
        StmtKind::IndexSet { target, index, value } => {
            globals(index, &mut info.reads);
            globals(value, &mut info.reads);
            info.reads.insert(target.clone());
            info.writes.insert(target.clone());
        }
        StmtKind::Push { target, value } => {
            globals(value, &mut info.reads);
            info.reads.insert(target.clone());
            info.writes.insert(target.clone());
        }
        StmtKind::FnDef(def) => {
            info.defs.insert(def.name.clone());
        }
        StmtKind::Expr(e) => globals(e, &mut info.reads),
    }
    info.free_reads = info.reads.clone();
    info
}

/// Global names referenced by an expression. A string literal naming the
/// function of `task_fn` counts as a reference to that function.
pub fn globals(e: &Expr, out: &mut BTreeSet<String>) {
    e.for_each_ident(&mut |id| {
        if id.class == NameClass::Global {
            out.insert(id.name.clone());
        }
    });
    named_task_fns(e, out);
}

fn named_task_fns(e: &Expr, out: &mut BTreeSet<String>) {
    match e {
        Expr::Call(head, args) => {
            if head.class == NameClass::Builtin && head.name == "task_fn" {
                if let Some(Expr::Str(name)) = args.first() {
                    if is_identifier(name) && !is_builtin(name) {
                        out.insert(name.clone());
                    }
                }
            }
            args.iter().for_each(|a| named_task_fns(a, out));
        }
        Expr::List(items) => items.iter().for_each(|a| named_task_fns(a, out)),
        Expr::Map(pairs) => pairs.iter().for_each(|(k, v)| {
            named_task_fns(k, out);
            named_task_fns(v, out);
        }),
        Expr::Neg(a) => named_task_fns(a, out),
        Expr::Binary(_, a, b) | Expr::Index(a, b) => {
            named_task_fns(a, out);
            named_task_fns(b, out);
        }
        _ => {}
    }
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c == '_' || c.is_ascii_alphabetic())
        && chars.all(|c| c == '_' || c.is_ascii_alphanumeric())
}
