use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;

use super::eval::{as_f64, EvalResult, Evaluator};
use crate::analysis::globals;
use crate::task::TaskSpec;
use crate::value::{Handle, Obj, Value};

fn arity(name: &str, args: &[Value], min: usize, max: usize) -> EvalResult<()> {
    if args.len() < min || args.len() > max {
        let want = if min == max { format!("{min}") } else { format!("{min} to {max}") };
        return Err(format!("{name}() takes {want} argument(s), got {}", args.len()));
    }
    Ok(())
}

fn want_str<'a>(name: &str, v: &'a Value) -> EvalResult<&'a str> {
    match v {
        Value::Str(s) => Ok(s),
        other => Err(format!("{name}() expects a string, got {}", other.kind())),
    }
}

fn want_int(name: &str, v: &Value) -> EvalResult<i64> {
    match v {
        Value::Int(i) => Ok(*i),
        other => Err(format!("{name}() expects an int, got {}", other.kind())),
    }
}

impl Evaluator<'_, '_> {
    fn want_list(&self, name: &str, v: &Value) -> EvalResult<Vec<Value>> {
        match v {
            Value::List(id) => self.list_items(*id),
            other => Err(format!("{name}() expects a list, got {}", other.kind())),
        }
    }

    fn want_map(&self, name: &str, v: &Value) -> EvalResult<BTreeMap<String, Value>> {
        match v {
            Value::Map(id) => match self.state.obj(*id) {
                Some(Obj::Map(m)) => Ok(m.clone()),
                _ => Err(String::from("dangling map reference")),
            },
            other => Err(format!("{name}() expects a map, got {}", other.kind())),
        }
    }

    fn want_strings(&self, name: &str, v: &Value) -> EvalResult<Vec<String>> {
        self.want_list(name, v)?
            .iter()
            .map(|x| want_str(name, x).map(String::from))
            .collect()
    }

    fn new_list(&mut self, items: Vec<Value>) -> Value {
        Value::List(self.state.alloc(Obj::List(items)))
    }

    fn new_map(&mut self, m: BTreeMap<String, Value>) -> Value {
        Value::Map(self.state.alloc(Obj::Map(m)))
    }

    fn callable(&mut self, name: &str, v: &Value) -> EvalResult<Arc<crate::value::FnDef>> {
        match v {
            Value::Fn(def) => Ok(def.clone()),
            other => Err(format!("{name}() expects a function, got {}", other.kind())),
        }
    }

    /// Definition text of `root` and every function its body can reach.
    fn capture_sources(&mut self, root: &str) -> EvalResult<BTreeMap<String, String>> {
        let mut out = BTreeMap::new();
        let mut todo = alloc::vec![root.to_string()];
        while let Some(name) = todo.pop() {
            if out.contains_key(&name) {
                continue;
            }
            let def = match self.state.get(&name) {
                Some(Value::Fn(def)) => def.clone(),
                _ => return Err(format!("`{name}` is not a defined function")),
            };
            let mut refs = alloc::collections::BTreeSet::new();
            globals(&def.body, &mut refs);
            todo.extend(refs.into_iter().filter(|r| !out.contains_key(r)));
            self.result.reads_observed.insert(name.clone());
            out.insert(name, def.source.clone());
        }
        Ok(out)
    }

    fn submit(&mut self, spec: TaskSpec) -> EvalResult<Value> {
        let spec = Arc::new(spec);
        self.host.submit(&spec)?;
        self.result.tasks_submitted.push(spec.id.clone());
        Ok(Value::Task(spec))
    }

    fn tasks_of(&self, v: &Value) -> EvalResult<(Vec<Arc<TaskSpec>>, bool)> {
        match v {
            Value::Task(t) => Ok((alloc::vec![t.clone()], false)),
            Value::List(id) => {
                let tasks = self
                    .list_items(*id)?
                    .into_iter()
                    .map(|x| match x {
                        Value::Task(t) => Ok(t),
                        other => Err(format!("compute() expects tasks, got {}", other.kind())),
                    })
                    .collect::<EvalResult<Vec<_>>>()?;
                Ok((tasks, true))
            }
            other => Err(format!("compute() expects a task or a list of tasks, got {}", other.kind())),
        }
    }

    fn numbers(&self, name: &str, v: &Value) -> EvalResult<Vec<Value>> {
        let items = self.want_list(name, v)?;
        if let Some(bad) = items.iter().find(|x| !matches!(x, Value::Int(_) | Value::Float(_))) {
            return Err(format!("{name}() expects numbers, got {}", bad.kind()));
        }
        Ok(items)
    }

    fn extreme(&self, name: &str, v: &Value, want_greater: bool) -> EvalResult<Value> {
        let items = self.want_list(name, v)?;
        let mut best: Option<Value> = None;
        for x in items {
            best = Some(match best {
                None => x,
                Some(b) => {
                    let ord = self.compare(&x, &b).ok_or_else(|| format!("{name}() cannot compare {} and {}", x.kind(), b.kind()))?;
                    if (want_greater && ord.is_gt()) || (!want_greater && ord.is_lt()) {
                        x
                    } else {
                        b
                    }
                }
            });
        }
        best.ok_or_else(|| format!("{name}() of an empty list"))
    }
}

fn sum_numbers(items: &[Value]) -> EvalResult<Value> {
    let mut int_total: Option<i64> = Some(0);
    let mut float_total = 0.0;
    for x in items {
        float_total += as_f64(x);
        int_total = match (int_total, x) {
            (Some(t), Value::Int(i)) => Some(t.checked_add(*i).ok_or_else(|| String::from("integer overflow"))?),
            _ => None,
        };
    }
    Ok(int_total.map(Value::Int).unwrap_or(Value::Float(float_total)))
}

pub(super) fn call(ev: &mut Evaluator<'_, '_>, name: &str, args: Vec<Value>) -> EvalResult<Value> {
    match name {
        "read_text" => {
            arity(name, &args, 1, 1)?;
            let text = ev.host.read_text(want_str(name, &args[0])?)?;
            Ok(Value::str(&text))
        }
        "write_text" => {
            arity(name, &args, 2, 2)?;
            let path = want_str(name, &args[0])?;
            ev.host.write_text(path, want_str(name, &args[1])?)?;
            Ok(args[0].clone())
        }
        "lines" => {
            arity(name, &args, 1, 1)?;
            let items = want_str(name, &args[0])?.lines().map(Value::str).collect();
            Ok(ev.new_list(items))
        }
        "words" => {
            arity(name, &args, 1, 1)?;
            let items = want_str(name, &args[0])?.split_whitespace().map(Value::str).collect();
            Ok(ev.new_list(items))
        }
        "split" => {
            arity(name, &args, 2, 2)?;
            let sep = want_str(name, &args[1])?;
            if sep.is_empty() {
                return Err(String::from("split() separator must not be empty"));
            }
            let items = want_str(name, &args[0])?.split(sep).map(Value::str).collect();
            Ok(ev.new_list(items))
        }
        "join" => {
            arity(name, &args, 2, 2)?;
            let parts = ev.want_strings(name, &args[0])?;
            Ok(Value::str(&parts.join(want_str(name, &args[1])?)))
        }
        "upper" => {
            arity(name, &args, 1, 1)?;
            Ok(Value::str(&want_str(name, &args[0])?.to_uppercase()))
        }
        "lower" => {
            arity(name, &args, 1, 1)?;
            Ok(Value::str(&want_str(name, &args[0])?.to_lowercase()))
        }
        "trim" => {
            arity(name, &args, 1, 1)?;
            Ok(Value::str(want_str(name, &args[0])?.trim()))
        }
        "len" => {
            arity(name, &args, 1, 1)?;
            let n = match &args[0] {
                Value::Str(s) => s.chars().count(),
                Value::List(_) => ev.want_list(name, &args[0])?.len(),
                Value::Map(_) => ev.want_map(name, &args[0])?.len(),
                other => return Err(format!("len() of {}", other.kind())),
            };
            Ok(Value::Int(n as i64))
        }
        "sum" => {
            arity(name, &args, 1, 1)?;
            sum_numbers(&ev.numbers(name, &args[0])?)
        }
        "mean" => {
            arity(name, &args, 1, 1)?;
            let items = ev.numbers(name, &args[0])?;
            if items.is_empty() {
                return Err(String::from("mean() of an empty list"));
            }
            let total: f64 = items.iter().map(as_f64).sum();
            Ok(Value::Float(total / items.len() as f64))
        }
        "min" => {
            arity(name, &args, 1, 1)?;
            ev.extreme(name, &args[0], false)
        }
        "max" => {
            arity(name, &args, 1, 1)?;
            ev.extreme(name, &args[0], true)
        }
        "show" => {
            let parts: Vec<String> = args.iter().map(|a| ev.render(a)).collect();
            let out = ev.state.stdout_mut();
            out.push_str(&parts.join(" "));
            out.push('\n');
            Ok(Value::Unit)
        }
        "str" => {
            arity(name, &args, 1, 1)?;
            Ok(Value::str(&ev.render(&args[0])))
        }
        "int" => {
            arity(name, &args, 1, 1)?;
            match &args[0] {
                Value::Int(i) => Ok(Value::Int(*i)),
                Value::Float(f) if f.is_finite() && *f >= i64::MIN as f64 && *f < i64::MAX as f64 => {
                    Ok(Value::Int(*f as i64))
                }
                Value::Str(s) => s.trim().parse().map(Value::Int).map_err(|_| format!("int() cannot parse {s:?}")),
                Value::Bool(b) => Ok(Value::Int(*b as i64)),
                other => Err(format!("int() of {}", other.kind())),
            }
        }
        "float" => {
            arity(name, &args, 1, 1)?;
            match &args[0] {
                Value::Int(i) => Ok(Value::Float(*i as f64)),
                Value::Float(f) => Ok(Value::Float(*f)),
                Value::Str(s) => s.trim().parse().map(Value::Float).map_err(|_| format!("float() cannot parse {s:?}")),
                other => Err(format!("float() of {}", other.kind())),
            }
        }
        "range" => {
            arity(name, &args, 1, 2)?;
            let (lo, hi) = match args.as_slice() {
                [n] => (0, want_int(name, n)?),
                [a, b] => (want_int(name, a)?, want_int(name, b)?),
                _ => unreachable!(),
            };
            if hi.saturating_sub(lo) > 10_000_000 {
                return Err(String::from("range() too large"));
            }
            let items = (lo..hi).map(Value::Int).collect();
            Ok(ev.new_list(items))
        }
        "keys" => {
            arity(name, &args, 1, 1)?;
            let items = ev.want_map(name, &args[0])?.into_keys().map(|k| Value::str(&k)).collect();
            Ok(ev.new_list(items))
        }
        "values" => {
            arity(name, &args, 1, 1)?;
            let items = ev.want_map(name, &args[0])?.into_values().collect();
            Ok(ev.new_list(items))
        }
        "get" => {
            arity(name, &args, 2, 3)?;
            let found = match (&args[0], &args[1]) {
                (Value::Map(_), Value::Str(k)) => ev.want_map(name, &args[0])?.get(&**k).cloned(),
                (Value::List(_), Value::Int(i)) => {
                    usize::try_from(*i).ok().and_then(|i| ev.want_list(name, &args[0]).ok()?.get(i).cloned())
                }
                (c, k) => return Err(format!("get() cannot look up {} in {}", k.kind(), c.kind())),
            };
            match (found, args.get(2)) {
                (Some(v), _) => Ok(v),
                (None, Some(default)) => Ok(default.clone()),
                (None, None) => Err(String::from("get(): key not found")),
            }
        }
        "has" => {
            arity(name, &args, 2, 2)?;
            let m = ev.want_map(name, &args[0])?;
            Ok(Value::Bool(m.contains_key(want_str(name, &args[1])?)))
        }
        "map" => {
            arity(name, &args, 2, 2)?;
            let f = ev.callable(name, &args[0])?;
            let items = ev.want_list(name, &args[1])?;
            let out = items.into_iter().map(|x| ev.apply(&f, alloc::vec![x])).collect::<EvalResult<Vec<_>>>()?;
            Ok(ev.new_list(out))
        }
        "filter" => {
            arity(name, &args, 2, 2)?;
            let f = ev.callable(name, &args[0])?;
            let mut out = Vec::new();
            for x in ev.want_list(name, &args[1])? {
                match ev.apply(&f, alloc::vec![x.clone()])? {
                    Value::Bool(true) => out.push(x),
                    Value::Bool(false) => {}
                    other => return Err(format!("filter() predicate returned {}", other.kind())),
                }
            }
            Ok(ev.new_list(out))
        }
        "sorted" => {
            arity(name, &args, 1, 1)?;
            let mut items = ev.want_list(name, &args[0])?;
            let mut err = None;
            items.sort_by(|a, b| {
                ev.compare(a, b).unwrap_or_else(|| {
                    err.get_or_insert_with(|| format!("sorted() cannot compare {} and {}", a.kind(), b.kind()));
                    core::cmp::Ordering::Equal
                })
            });
            if let Some(e) = err {
                return Err(e);
            }
            Ok(ev.new_list(items))
        }
        "slice" => {
            arity(name, &args, 3, 3)?;
            let (a, b) = (want_int(name, &args[1])?, want_int(name, &args[2])?);
            let clamp = |v: i64, len: usize| usize::try_from(v.max(0)).unwrap_or(0).min(len);
            match &args[0] {
                Value::Str(s) => {
                    let chars: Vec<char> = s.chars().collect();
                    let (a, b) = (clamp(a, chars.len()), clamp(b, chars.len()));
                    Ok(Value::str(&chars[a..b.max(a)].iter().collect::<String>()))
                }
                other => {
                    let items = ev.want_list(name, other)?;
                    let (a, b) = (clamp(a, items.len()), clamp(b, items.len()));
                    let out = items[a..b.max(a)].to_vec();
                    Ok(ev.new_list(out))
                }
            }
        }
        "zip" => {
            arity(name, &args, 2, 2)?;
            let xs = ev.want_list(name, &args[0])?;
            let ys = ev.want_list(name, &args[1])?;
            let pairs: Vec<Value> = xs.into_iter().zip(ys).map(|(x, y)| ev.new_list(alloc::vec![x, y])).collect();
            Ok(ev.new_list(pairs))
        }
        "product" => {
            arity(name, &args, 2, 2)?;
            let xs = ev.want_list(name, &args[0])?;
            let ys = ev.want_list(name, &args[1])?;
            let mut pairs = Vec::new();
            for x in &xs {
                for y in &ys {
                    pairs.push(ev.new_list(alloc::vec![x.clone(), y.clone()]));
                }
            }
            Ok(ev.new_list(pairs))
        }
        "tally" => {
            arity(name, &args, 1, 1)?;
            let mut counts: BTreeMap<String, Value> = BTreeMap::new();
            for w in ev.want_strings(name, &args[0])? {
                let n = match counts.get(&w) {
                    Some(Value::Int(n)) => *n,
                    _ => 0,
                };
                counts.insert(w, Value::Int(n + 1));
            }
            Ok(ev.new_map(counts))
        }
        "merge_counts" => {
            arity(name, &args, 1, 1)?;
            let mut total: BTreeMap<String, Value> = BTreeMap::new();
            for m in ev.want_list(name, &args[0])? {
                for (k, v) in ev.want_map(name, &m)? {
                    let add = want_int(name, &v)?;
                    let prev = match total.get(&k) {
                        Some(Value::Int(n)) => *n,
                        _ => 0,
                    };
                    let sum = prev.checked_add(add).ok_or_else(|| String::from("integer overflow"))?;
                    total.insert(k, Value::Int(sum));
                }
            }
            Ok(ev.new_map(total))
        }
        "grid" => {
            // Deterministic rows x cols image of small ints, varied by seed.
            arity(name, &args, 3, 3)?;
            let (rows, cols, seed) = (want_int(name, &args[0])?, want_int(name, &args[1])?, want_int(name, &args[2])?);
            if !(0..=4096).contains(&rows) || !(0..=4096).contains(&cols) {
                return Err(String::from("grid() dimensions out of range"));
            }
            let mut out = Vec::new();
            for r in 0..rows {
                let row = (0..cols)
                    .map(|c| Value::Int((r * 31 + c * 17 + seed.wrapping_mul(7)).rem_euclid(10)))
                    .collect();
                out.push(ev.new_list(row));
            }
            Ok(ev.new_list(out))
        }
        "convolve" => {
            arity(name, &args, 2, 2)?;
            let image = matrix(ev, name, &args[0])?;
            let kernel = matrix(ev, name, &args[1])?;
            let (kh, kw) = (kernel.len(), kernel.first().map_or(0, Vec::len));
            let (ih, iw) = (image.len(), image.first().map_or(0, Vec::len));
            if kh == 0 || kw == 0 || kh > ih || kw > iw {
                return Err(String::from("convolve() kernel does not fit the image"));
            }
            let mut out = Vec::new();
            for r in 0..=ih - kh {
                let mut row = Vec::new();
                for c in 0..=iw - kw {
                    let mut acc = 0.0;
                    for (i, krow) in kernel.iter().enumerate() {
                        for (j, k) in krow.iter().enumerate() {
                            acc += k * image[r + i][c + j];
                        }
                    }
                    row.push(Value::Float(acc));
                }
                out.push(ev.new_list(row));
            }
            Ok(ev.new_list(out))
        }
        "render" => {
            arity(name, &args, 1, 1)?;
            let rows = ev.want_list(name, &args[0])?;
            let mut text = String::new();
            for row in rows {
                let cells: Vec<String> = ev.want_list(name, &row)?.iter().map(|v| ev.render(v)).collect();
                text.push_str(&cells.join(" "));
                text.push('\n');
            }
            Ok(Value::str(&text))
        }
        "connect" => {
            arity(name, &args, 1, 1)?;
            let uri = want_str(name, &args[0])?;
            if uri != "local" && !uri.contains("://") {
                return Err(format!("connect(): invalid address {uri:?}"));
            }
            Ok(Value::Handle(Handle { uri: uri.to_string(), origin: ev.stmt.clone() }))
        }
        "task_cmd" => {
            arity(name, &args, 3, 3)?;
            let command = want_str(name, &args[0])?;
            let inputs = ev.want_strings(name, &args[1])?;
            let outputs = ev.want_strings(name, &args[2])?;
            let spec = TaskSpec::command(command, inputs, outputs).map_err(|e| e.to_string())?;
            ev.submit(spec)
        }
        "task_fn" => {
            arity(name, &args, 2, 4)?;
            let fname = match &args[0] {
                Value::Str(s) => s.to_string(),
                Value::Fn(def) => def.name.clone(),
                other => return Err(format!("task_fn() expects a function or its name, got {}", other.kind())),
            };
            let sources = ev.capture_sources(&fname)?;
            let call_args = ev
                .want_list(name, &args[1])?
                .iter()
                .map(|a| ev.state.to_data(a).map_err(|e| format!("task argument: {e}")))
                .collect::<EvalResult<Vec<_>>>()?;
            let inputs = match args.get(2) {
                Some(v) => ev.want_strings(name, v)?,
                None => Vec::new(),
            };
            let outputs = match args.get(3) {
                Some(v) => ev.want_strings(name, v)?,
                None => Vec::new(),
            };
            let spec = TaskSpec::function(&fname, call_args, sources, inputs, outputs).map_err(|e| e.to_string())?;
            ev.submit(spec)
        }
        "compute" => {
            arity(name, &args, 1, 1)?;
            let (tasks, many) = ev.tasks_of(&args[0])?;
            let results = ev.host.compute(&tasks)?;
            if results.len() != tasks.len() {
                return Err(String::from("task manager returned the wrong number of results"));
            }
            let mut vals: Vec<Value> = results.iter().map(|d| ev.state.from_data(d)).collect();
            if many {
                Ok(ev.new_list(vals))
            } else {
                Ok(vals.pop().unwrap_or(Value::Unit))
            }
        }
        other => Err(format!("unknown builtin `{other}`")),
    }
}

fn matrix(ev: &Evaluator<'_, '_>, name: &str, v: &Value) -> EvalResult<Vec<Vec<f64>>> {
    let mut out = Vec::new();
    for row in ev.want_list(name, v)? {
        let nums = ev.numbers(name, &row)?;
        out.push(nums.iter().map(as_f64).collect::<Vec<f64>>());
    }
    if out.windows(2).any(|w| w[0].len() != w[1].len()) {
        return Err(format!("{name}() expects a rectangular matrix"));
    }
    Ok(out)
}
