//! Runtime values, heap objects, and the self-contained `Data` tree used for
//! serialization, task arguments and task results.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

use crate::syntax::Expr;
use crate::task::TaskSpec;

pub type HeapId = u64;

/// Identifies one statement of one cell, rendered `cell#index`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StmtRef {
    pub cell_id: String,
    pub index: u32,
}

impl fmt::Display for StmtRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.cell_id, self.index)
    }
}

/// A user function. Identity is the exact definition text.
#[derive(Debug, Clone)]
pub struct FnDef {
    pub name: String,
    pub params: Vec<String>,
    pub body: Expr,
    pub source: String,
}

impl PartialEq for FnDef {
    fn eq(&self, other: &Self) -> bool {
        self.source == other.source
    }
}

impl Eq for FnDef {}

/// A live resource such as a cluster connection. Never serialized; rebuilt
/// by re-running the statement that created it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Handle {
    pub uri: String,
    pub origin: StmtRef,
}

#[derive(Debug, Clone)]
pub enum Value {
    Unit,
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(Arc<str>),
    List(HeapId),
    Map(HeapId),
    Handle(Handle),
    Fn(Arc<FnDef>),
    Task(Arc<TaskSpec>),
}

impl Value {
    pub fn heap_id(&self) -> Option<HeapId> {
        match self {
            Value::List(id) | Value::Map(id) => Some(*id),
            _ => None,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Value::Unit => "unit",
            Value::Bool(_) => "bool",
            Value::Int(_) => "int",
            Value::Float(_) => "float",
            Value::Str(_) => "string",
            Value::List(_) => "list",
            Value::Map(_) => "map",
            Value::Handle(_) => "handle",
            Value::Fn(_) => "fn",
            Value::Task(_) => "task",
        }
    }

    pub fn str(s: &str) -> Value {
        Value::Str(Arc::from(s))
    }
}

/// Contents of a mutable heap slot.
#[derive(Debug, Clone)]
pub enum Obj {
    List(Vec<Value>),
    Map(BTreeMap<String, Value>),
}

/// A value with no heap indirection: what gets encoded, handed to tasks and
/// returned from them. Floats compare by bit pattern so that equality agrees
/// with the canonical encoding.
#[derive(Debug, Clone)]
pub enum Data {
    Unit,
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
    List(Vec<Data>),
    Map(BTreeMap<String, Data>),
    Fn(Arc<FnDef>),
    Task(Arc<TaskSpec>),
}

impl PartialEq for Data {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Data::Unit, Data::Unit) => true,
            (Data::Bool(a), Data::Bool(b)) => a == b,
            (Data::Int(a), Data::Int(b)) => a == b,
            (Data::Float(a), Data::Float(b)) => a.to_bits() == b.to_bits(),
            (Data::Str(a), Data::Str(b)) => a == b,
            (Data::List(a), Data::List(b)) => a == b,
            (Data::Map(a), Data::Map(b)) => a == b,
            (Data::Fn(a), Data::Fn(b)) => a == b,
            (Data::Task(a), Data::Task(b)) => a == b,
            _ => false,
        }
    }
}

impl Eq for Data {}

impl Data {
    pub fn kind(&self) -> &'static str {
        match self {
            Data::Unit => "unit",
            Data::Bool(_) => "bool",
            Data::Int(_) => "int",
            Data::Float(_) => "float",
            Data::Str(_) => "string",
            Data::List(_) => "list",
            Data::Map(_) => "map",
            Data::Fn(_) => "fn",
            Data::Task(_) => "task",
        }
    }

    /// Human-readable rendering used by `show` and `str`. Top-level strings
    /// render bare; nested strings are quoted.
    pub fn render(&self) -> String {
        match self {
            Data::Str(s) => s.clone(),
            other => {
                let mut out = String::new();
                other.render_nested(&mut out);
                out
            }
        }
    }

    fn render_nested(&self, out: &mut String) {
        match self {
            Data::Unit => out.push_str("()"),
            Data::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
            Data::Int(v) => out.push_str(&format!("{v}")),
            Data::Float(v) => out.push_str(&render_float(*v)),
            Data::Str(s) => out.push_str(&format!("{s:?}")),
            Data::List(items) => {
                out.push('[');
                for (i, it) in items.iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    it.render_nested(out);
                }
                out.push(']');
            }
            Data::Map(m) => {
                out.push('{');
                for (i, (k, v)) in m.iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    out.push_str(&format!("{k:?}: "));
                    v.render_nested(out);
                }
                out.push('}');
            }
            Data::Fn(def) => out.push_str(&format!("<fn {}>", def.name)),
            Data::Task(spec) => out.push_str(&format!("<task {}>", spec.id)),
        }
    }
}

pub(crate) fn render_float(v: f64) -> String {
    if v.is_finite() && v == (v as i64) as f64 && v.abs() < 1e15 {
        format!("{v:.1}")
    } else {
        format!("{v}")
    }
}
