use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;

use super::{builtins, ExecResult, Host, KernelState, Origin, RuntimeError};
use crate::analysis::analyze_statement;
use crate::syntax::{BinOp, CellAst, Expr, Ident, NameClass, Statement, StmtKind};
use crate::value::{render_float, FnDef, HeapId, Obj, StmtRef, Value};

const MAX_DEPTH: usize = 200;

pub(super) type Locals = BTreeMap<String, Value>;

/// Execute every statement of a cell in order.
pub fn eval_cell(state: &mut KernelState, cell_id: &str, ast: &CellAst, host: &mut dyn Host) -> Result<ExecResult, RuntimeError> {
    eval_cell_at(state, cell_id, 0, ast, host)
}

/// As [`eval_cell`], numbering statements from `first_index`. Used to
/// re-run a single recorded statement under its original reference.
pub fn eval_cell_at(
    state: &mut KernelState,
    cell_id: &str,
    first_index: u32,
    ast: &CellAst,
    host: &mut dyn Host,
) -> Result<ExecResult, RuntimeError> {
    state.stdout_mut().clear();
    let mut ev = Evaluator {
        state,
        host,
        stmt: StmtRef { cell_id: cell_id.to_string(), index: first_index },
        result: ExecResult::default(),
        depth: 0,
    };
    for (i, stmt) in ast.statements.iter().enumerate() {
        ev.stmt.index = first_index + i as u32;
        ev.statement(stmt).map_err(|message| RuntimeError {
            stmt: Some(ev.stmt.clone()),
            pos: Some(stmt.span.start),
            message,
        })?;
    }
    let mut result = ev.result;
    result.stdout = state.stdout().to_string();
    Ok(result)
}

/// Apply a function to already-evaluated arguments.
pub fn call_fn(state: &mut KernelState, def: &Arc<FnDef>, args: Vec<Value>, host: &mut dyn Host) -> Result<Value, RuntimeError> {
    let mut ev = Evaluator {
        state,
        host,
        stmt: StmtRef { cell_id: String::from("<task>"), index: 0 },
        result: ExecResult::default(),
        depth: 0,
    };
    ev.apply(def, args).map_err(RuntimeError::new)
}

pub(super) struct Evaluator<'s, 'h> {
    pub state: &'s mut KernelState,
    pub host: &'h mut dyn Host,
    pub stmt: StmtRef,
    pub result: ExecResult,
    depth: usize,
}

pub(super) type EvalResult<T> = Result<T, String>;

impl Evaluator<'_, '_> {
    fn statement(&mut self, stmt: &Statement) -> EvalResult<()> {
        match &stmt.kind {
            StmtKind::Assign { target, value } => {
                let v = self.expr(value, None)?;
                self.state.bind(target, v);
                self.result.writes_observed.insert(target.clone());
                let deps = analyze_statement(stmt).reads.into_iter().collect();
                self.state.set_origin(target, Origin { stmt: self.stmt.clone(), source: stmt.source.clone(), deps });
            }
            StmtKind::FnDef(def) => {
                self.state.bind(&def.name, Value::Fn(def.clone()));
                self.result.writes_observed.insert(def.name.clone());
                self.state.set_origin(&def.name, Origin { stmt: self.stmt.clone(), source: stmt.source.clone(), deps: Vec::new() });
            }
            StmtKind::Push { target, value } => {
                let v = self.expr(value, None)?;
                let id = self.mutable_target(target)?;
                match self.state.obj_mut(id) {
                    Some(Obj::List(items)) => items.push(v),
                    _ => return Err(format!("push target `{target}` is not a list")),
                }
                self.mutated(target, id);
            }
            StmtKind::IndexSet { target, index, value } => {
                let key = self.expr(index, None)?;
                let v = self.expr(value, None)?;
                let id = self.mutable_target(target)?;
                match (self.state.obj_mut(id), key) {
                    (Some(Obj::List(items)), Value::Int(i)) => {
                        let len = items.len();
                        let slot = usize::try_from(i).ok().and_then(|i| items.get_mut(i));
                        match slot {
                            Some(slot) => *slot = v,
                            None => return Err(format!("index {i} out of range for list of length {len}")),
                        }
                    }
                    (Some(Obj::Map(m)), Value::Str(k)) => {
                        m.insert(k.to_string(), v);
                    }
                    (Some(Obj::List(_)), k) => return Err(format!("list index must be int, got {}", k.kind())),
                    (Some(Obj::Map(_)), k) => return Err(format!("map key must be string, got {}", k.kind())),
                    (None, _) => return Err(format!("dangling reference in `{target}`")),
                }
                self.mutated(target, id);
            }
            StmtKind::Expr(e) => {
                self.expr(e, None)?;
            }
        }
        Ok(())
    }

    fn mutable_target(&mut self, target: &str) -> EvalResult<HeapId> {
        let v = self.lookup_global(target, false)?;
        v.heap_id().ok_or_else(|| format!("`{target}` is a {}, which cannot be mutated", v.kind()))
    }

    /// Record a mutation of `id` through `target`. Every name that can reach
    /// the object right now sees the change, even if it is rebound later in
    /// the cell.
    fn mutated(&mut self, target: &str, id: HeapId) {
        self.result.mutated_heap_ids.insert(id);
        self.result.writes_observed.insert(target.to_string());
        let seen: Vec<String> = self
            .state
            .env()
            .iter()
            .filter(|(_, v)| v.heap_id().is_some() && self.state.reachable(v).contains(&id))
            .map(|(n, _)| n.clone())
            .collect();
        self.result.writes_observed.extend(seen);
    }

    fn lookup_global(&mut self, name: &str, in_fn: bool) -> EvalResult<Value> {
        self.result.reads_observed.insert(name.to_string());
        match self.state.get(name) {
            Some(v @ Value::Fn(_)) => Ok(v.clone()),
            Some(_) if in_fn => Err(format!(
                "function bodies may only use parameters and functions; `{name}` is a variable"
            )),
            Some(v) => Ok(v.clone()),
            None => Err(format!("unbound variable `{name}`")),
        }
    }

    pub(super) fn expr(&mut self, e: &Expr, locals: Option<&Locals>) -> EvalResult<Value> {
        match e {
            Expr::Int(v) => Ok(Value::Int(*v)),
            Expr::Float(v) => Ok(Value::Float(*v)),
            Expr::Str(s) => Ok(Value::str(s)),
            Expr::Bool(b) => Ok(Value::Bool(*b)),
            Expr::Name(id) => self.name(id, locals),
            Expr::List(items) => {
                let vals = items.iter().map(|i| self.expr(i, locals)).collect::<EvalResult<Vec<_>>>()?;
                Ok(Value::List(self.state.alloc(Obj::List(vals))))
            }
            Expr::Map(pairs) => {
                let mut m = BTreeMap::new();
                for (k, v) in pairs {
                    let key = match self.expr(k, locals)? {
                        Value::Str(s) => s.to_string(),
                        other => return Err(format!("map keys must be strings, got {}", other.kind())),
                    };
                    let val = self.expr(v, locals)?;
                    m.insert(key, val);
                }
                Ok(Value::Map(self.state.alloc(Obj::Map(m))))
            }
            Expr::Neg(inner) => match self.expr(inner, locals)? {
                Value::Int(i) => i.checked_neg().map(Value::Int).ok_or_else(|| String::from("integer overflow")),
                Value::Float(f) => Ok(Value::Float(-f)),
                other => Err(format!("cannot negate {}", other.kind())),
            },
            Expr::Binary(op, l, r) => {
                let a = self.expr(l, locals)?;
                let b = self.expr(r, locals)?;
                self.binary(*op, a, b)
            }
            Expr::Index(base, idx) => {
                let b = self.expr(base, locals)?;
                let i = self.expr(idx, locals)?;
                self.index(&b, &i)
            }
            Expr::Call(head, args) => {
                let vals = args.iter().map(|a| self.expr(a, locals)).collect::<EvalResult<Vec<_>>>()?;
                match head.class {
                    NameClass::Builtin => builtins::call(self, &head.name, vals),
                    _ => match self.name(head, locals)? {
                        Value::Fn(def) => self.apply(&def, vals),
                        other => Err(format!("`{}` is a {}, not a function", head.name, other.kind())),
                    },
                }
            }
        }
    }

    fn name(&mut self, id: &Ident, locals: Option<&Locals>) -> EvalResult<Value> {
        match id.class {
            NameClass::Param => locals
                .and_then(|l| l.get(&id.name))
                .cloned()
                .ok_or_else(|| format!("unbound parameter `{}`", id.name)),
            NameClass::Global => self.lookup_global(&id.name, locals.is_some()),
            NameClass::Builtin => Err(format!("builtin `{}` cannot be used as a value", id.name)),
        }
    }

    pub(super) fn apply(&mut self, def: &Arc<FnDef>, args: Vec<Value>) -> EvalResult<Value> {
        if args.len() != def.params.len() {
            return Err(format!("`{}` takes {} argument(s), got {}", def.name, def.params.len(), args.len()));
        }
        if self.depth >= MAX_DEPTH {
            return Err(format!("call depth limit reached in `{}`", def.name));
        }
        let locals: Locals = def.params.iter().cloned().zip(args).collect();
        self.depth += 1;
        let out = self.expr(&def.body, Some(&locals));
        self.depth -= 1;
        out
    }

    fn index(&mut self, base: &Value, idx: &Value) -> EvalResult<Value> {
        match (base, idx) {
            (Value::List(id), Value::Int(i)) => match self.state.obj(*id) {
                Some(Obj::List(items)) => usize::try_from(*i)
                    .ok()
                    .and_then(|i| items.get(i))
                    .cloned()
                    .ok_or_else(|| format!("index {i} out of range for list of length {}", items.len())),
                _ => Err(String::from("dangling list reference")),
            },
            (Value::Map(id), Value::Str(k)) => match self.state.obj(*id) {
                Some(Obj::Map(m)) => m.get(&**k).cloned().ok_or_else(|| format!("missing key {k:?}")),
                _ => Err(String::from("dangling map reference")),
            },
            (b, i) => Err(format!("cannot index {} with {}", b.kind(), i.kind())),
        }
    }

    fn binary(&mut self, op: BinOp, a: Value, b: Value) -> EvalResult<Value> {
        use Value::{Float, Int};
        let mismatch = |a: &Value, b: &Value| format!("unsupported operands for {}: {} and {}", op.symbol(), a.kind(), b.kind());
        match op {
            BinOp::Eq => Ok(Value::Bool(self.deep_eq(&a, &b))),
            BinOp::Ne => Ok(Value::Bool(!self.deep_eq(&a, &b))),
            BinOp::Lt | BinOp::Gt | BinOp::Le | BinOp::Ge => {
                let ord = self.compare(&a, &b).ok_or_else(|| mismatch(&a, &b))?;
                Ok(Value::Bool(match op {
                    BinOp::Lt => ord.is_lt(),
                    BinOp::Gt => ord.is_gt(),
                    BinOp::Le => ord.is_le(),
                    _ => ord.is_ge(),
                }))
            }
            BinOp::Concat => match (&a, &b) {
                (Value::Str(x), Value::Str(y)) => {
                    let mut s = String::with_capacity(x.len() + y.len());
                    s.push_str(x);
                    s.push_str(y);
                    Ok(Value::str(&s))
                }
                (Value::List(x), Value::List(y)) => {
                    let mut items = self.list_items(*x)?;
                    items.extend(self.list_items(*y)?);
                    Ok(Value::List(self.state.alloc(Obj::List(items))))
                }
                _ => Err(mismatch(&a, &b)),
            },
            BinOp::Add | BinOp::Sub | BinOp::Mul | BinOp::Div | BinOp::Rem => match (&a, &b) {
                (Int(x), Int(y)) => {
                    let (x, y) = (*x, *y);
                    if matches!(op, BinOp::Div | BinOp::Rem) && y == 0 {
                        return Err(String::from("division by zero"));
                    }
                    let r = match op {
                        BinOp::Add => x.checked_add(y),
                        BinOp::Sub => x.checked_sub(y),
                        BinOp::Mul => x.checked_mul(y),
                        BinOp::Div => x.checked_div(y),
                        _ => x.checked_rem(y),
                    };
                    r.map(Int).ok_or_else(|| String::from("integer overflow"))
                }
                (Int(_) | Float(_), Int(_) | Float(_)) => {
                    let x = as_f64(&a);
                    let y = as_f64(&b);
                    if matches!(op, BinOp::Div | BinOp::Rem) && y == 0.0 {
                        return Err(String::from("division by zero"));
                    }
                    Ok(Float(match op {
                        BinOp::Add => x + y,
                        BinOp::Sub => x - y,
                        BinOp::Mul => x * y,
                        BinOp::Div => x / y,
                        _ => x % y,
                    }))
                }
                _ => Err(mismatch(&a, &b)),
            },
        }
    }

    pub(super) fn list_items(&self, id: HeapId) -> EvalResult<Vec<Value>> {
        match self.state.obj(id) {
            Some(Obj::List(items)) => Ok(items.clone()),
            _ => Err(String::from("dangling list reference")),
        }
    }

    pub(super) fn compare(&self, a: &Value, b: &Value) -> Option<core::cmp::Ordering> {
        match (a, b) {
            (Value::Int(x), Value::Int(y)) => Some(x.cmp(y)),
            (Value::Int(_) | Value::Float(_), Value::Int(_) | Value::Float(_)) => as_f64(a).partial_cmp(&as_f64(b)),
            (Value::Str(x), Value::Str(y)) => Some(x.cmp(y)),
            _ => None,
        }
    }

    pub(super) fn deep_eq(&self, a: &Value, b: &Value) -> bool {
        let mut seen = BTreeSet::new();
        eq_inner(self.state, a, b, &mut seen)
    }

    pub(super) fn render(&self, v: &Value) -> String {
        let mut out = String::new();
        let mut stack = Vec::new();
        render_into(self.state, v, true, &mut stack, &mut out);
        out
    }
}

pub(super) fn as_f64(v: &Value) -> f64 {
    match v {
        Value::Int(i) => *i as f64,
        Value::Float(f) => *f,
        _ => f64::NAN,
    }
}

fn eq_inner(state: &KernelState, a: &Value, b: &Value, seen: &mut BTreeSet<(HeapId, HeapId)>) -> bool {
    match (a, b) {
        (Value::Unit, Value::Unit) => true,
        (Value::Bool(x), Value::Bool(y)) => x == y,
        (Value::Int(x), Value::Int(y)) => x == y,
        (Value::Int(_) | Value::Float(_), Value::Int(_) | Value::Float(_)) => as_f64(a) == as_f64(b),
        (Value::Str(x), Value::Str(y)) => x == y,
        (Value::Handle(x), Value::Handle(y)) => x == y,
        (Value::Fn(x), Value::Fn(y)) => x == y,
        (Value::Task(x), Value::Task(y)) => x == y,
        (Value::List(x), Value::List(y)) | (Value::Map(x), Value::Map(y)) => {
            if x == y || !seen.insert((*x, *y)) {
                return true;
            }
            match (state.obj(*x), state.obj(*y)) {
                (Some(Obj::List(p)), Some(Obj::List(q))) => {
                    p.len() == q.len() && p.iter().zip(q).all(|(u, v)| eq_inner(state, u, v, seen))
                }
                (Some(Obj::Map(p)), Some(Obj::Map(q))) => {
                    p.len() == q.len()
                        && p.iter().zip(q).all(|((ku, u), (kv, v))| ku == kv && eq_inner(state, u, v, seen))
                }
                _ => false,
            }
        }
        _ => false,
    }
}

fn render_into(state: &KernelState, v: &Value, top: bool, stack: &mut Vec<HeapId>, out: &mut String) {
    match v {
        Value::Unit => out.push_str("()"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Int(i) => out.push_str(&format!("{i}")),
        Value::Float(f) => out.push_str(&render_float(*f)),
        Value::Str(s) if top => out.push_str(s),
        Value::Str(s) => out.push_str(&format!("{:?}", &**s)),
        Value::Handle(h) => out.push_str(&format!("<handle {}>", h.uri)),
        Value::Fn(def) => out.push_str(&format!("<fn {}>", def.name)),
        Value::Task(t) => out.push_str(&format!("<task {}>", t.id)),
        Value::List(id) | Value::Map(id) => {
            if stack.contains(id) {
                out.push_str("...");
                return;
            }
            stack.push(*id);
            match state.obj(*id) {
                Some(Obj::List(items)) => {
                    out.push('[');
                    for (i, it) in items.iter().enumerate() {
                        if i > 0 {
                            out.push_str(", ");
                        }
                        render_into(state, it, false, stack, out);
                    }
                    out.push(']');
                }
                Some(Obj::Map(m)) => {
                    out.push('{');
                    for (i, (k, it)) in m.iter().enumerate() {
                        if i > 0 {
                            out.push_str(", ");
                        }
                        out.push_str(&format!("{k:?}: "));
                        render_into(state, it, false, stack, out);
                    }
                    out.push('}');
                }
                None => out.push_str("<dangling>"),
            }
            stack.pop();
        }
    }
}
