use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use proptest::prelude::*;

use super::*;
use crate::syntax::parse_fn_def;

fn d(hex: &str) -> Digest {
    hex.parse().unwrap()
}

const HELLO: &str = "a948904f2f0f479b8f8197694b30184b0d2ed1c1cd2a1ec0fb85d299a192a447";

#[test]
fn canonicalization_examples() {
    assert_eq!(canonicalize_token("tmp-3fa85f64-5717-4562-b3fc-2c963f66afa6"), "tmp");
    assert_eq!(canonicalize_token("run-deadbeef"), "run");
    assert_eq!(canonicalize_token("run-deadbee"), "run-deadbee");
    assert_eq!(canonicalize_token("run-DEADBEEF"), "run-DEADBEEF");
    assert_eq!(canonicalize_token("-deadbeef"), "-deadbeef");
    assert_eq!(canonicalize_token("deadbeef"), "deadbeef");
    assert_eq!(canonicalize_token("wc -w out-0123abcd/a.txt"), "wc -w out/a.txt");
    assert_eq!(canonicalize_token("a-b-deadbeef-cafe"), "a-b");
    assert_eq!(canonicalize_token("a-deadbeef-caf"), "a-deadbeef-caf");
}

#[test]
fn strict_canonicalizer_leaves_commands_alone() {
    let s = Canonicalizer::strict();
    assert_eq!(s.command("cat x-deadbeef"), "cat x-deadbeef");
    assert_eq!(s.apply("x-deadbeef"), "x");
    assert_eq!(Canonicalizer::default().command("cat x-deadbeef"), "cat x");
}

proptest! {
    #[test]
    fn canonicalization_is_idempotent(s in "[a-z0-9 _/.-]{0,40}") {
        let once = canonicalize_token(&s);
        prop_assert_eq!(canonicalize_token(&once), once.clone());
    }
}

#[test]
fn command_fingerprint_golden() {
    let inputs = vec![("a.txt".to_string(), d(HELLO))];
    let c = Canonicalizer::default();
    assert_eq!(
        command_record("wc -w a.txt", &inputs, &c),
        r#"{"command":"wc -w a.txt","inputs":{"a.txt":"a948904f2f0f479b8f8197694b30184b0d2ed1c1cd2a1ec0fb85d299a192a447"}}"#
    );
    assert_eq!(
        fingerprint_cmd("wc -w a.txt", &inputs, &c).unwrap().to_hex(),
        "6056217ec8fec538a17b900b33ae33307e62a0703a140e6eb9c14b7097b00c45"
    );
}

#[test]
fn command_fingerprint_properties() {
    let c = Canonicalizer::default();
    let a = vec![("a.txt".to_string(), d(HELLO))];
    let other = vec![("a.txt".to_string(), sha256(b"bye\n"))];
    let fp = |cmd: &str, i: &[(String, Digest)]| fingerprint_cmd(cmd, i, &c).unwrap();
    assert_ne!(fp("wc -w a.txt", &a), fp("wc -l a.txt", &a));
    assert_ne!(fp("wc -w a.txt", &a), fp("wc -w a.txt", &other));
    assert_eq!(fp("sort tmp-deadbeef1", &a), fp("sort tmp-0123456789", &a));
    let two = vec![("b.txt".to_string(), sha256(b"x")), ("a.txt".to_string(), d(HELLO))];
    let rev: Vec<_> = two.iter().rev().cloned().collect();
    assert_eq!(fp("cat", &two), fp("cat", &rev));
    let clash = vec![("a.txt".to_string(), d(HELLO)), ("a.txt".to_string(), sha256(b"x"))];
    assert_eq!(
        fingerprint_cmd("cat", &clash, &c),
        Err(FingerprintError::BasenameClash("a.txt".to_string()))
    );
}

fn sources(defs: &[&str]) -> BTreeMap<String, String> {
    defs.iter().map(|s| (parse_fn_def(s).unwrap().name.clone(), s.to_string())).collect()
}

fn fn_task(fname: &str, args: Vec<Data>, defs: &[&str]) -> TaskSpec {
    TaskSpec::function(fname, args, sources(defs), vec![], vec![]).unwrap()
}

fn fn_fp(t: &TaskSpec, inputs: &[Digest]) -> Digest {
    fingerprint_fn(t, inputs, &|_| sha256(b"parent"), &Canonicalizer::default()).unwrap()
}

#[test]
fn function_fingerprint_sensitivity() {
    let base = fn_task("f", vec![Data::Int(1)], &["fn f(a) = a + 1"]);
    let fp = fn_fp(&base, &[]);
    assert_eq!(fp, fn_fp(&fn_task("f", vec![Data::Int(1)], &["fn f(a) = a + 1"]), &[]));
    assert_ne!(fp, fn_fp(&fn_task("f", vec![Data::Int(2)], &["fn f(a) = a + 1"]), &[]));
    assert_ne!(fp, fn_fp(&fn_task("f", vec![Data::Int(1)], &["fn f(a) = a + 2"]), &[]));
    assert_ne!(fp, fn_fp(&base, &[sha256(b"x")]));
    // A helper's source is part of the identity.
    let h1 = fn_fp(&fn_task("f", vec![], &["fn f() = g()", "fn g() = 1"]), &[]);
    let h2 = fn_fp(&fn_task("f", vec![], &["fn f() = g()", "fn g() = 2"]), &[]);
    assert_ne!(h1, h2);
    // Generated suffixes in string arguments are ignored.
    let s1 = fn_task("f", vec![Data::Str("out-deadbeef00".into())], &["fn f(a) = a"]);
    let s2 = fn_task("f", vec![Data::Str("out-0123456789".into())], &["fn f(a) = a"]);
    assert_eq!(fn_fp(&s1, &[]), fn_fp(&s2, &[]));
    let i1 = fn_fp(&base, &[sha256(b"a"), sha256(b"b")]);
    let i2 = fn_fp(&base, &[sha256(b"b"), sha256(b"a")]);
    assert_eq!(i1, i2);
}

#[test]
fn function_fingerprint_uses_parent_fingerprints() {
    let parent = Arc::new(fn_task("p", vec![], &["fn p() = 1"]));
    let child = fn_task("f", vec![Data::Task(parent.clone())], &["fn f(a) = a"]);
    let c = Canonicalizer::default();
    let a = fingerprint_fn(&child, &[], &|_| sha256(b"one"), &c).unwrap();
    let b = fingerprint_fn(&child, &[], &|_| sha256(b"two"), &c).unwrap();
    assert_ne!(a, b);
    let cmd = TaskSpec::command("true", vec![], vec!["o".into()]).unwrap();
    assert!(fingerprint_fn(&cmd, &[], &|_| sha256(b""), &c).is_err());
}

#[test]
fn identical_specs_share_ids() {
    let a = TaskSpec::command("wc -w a.txt", vec!["a.txt".into()], vec!["n.txt".into()]).unwrap();
    let b = TaskSpec::command("wc -w a.txt", vec!["a.txt".into()], vec!["n.txt".into()]).unwrap();
    let c = TaskSpec::command("wc -l a.txt", vec!["a.txt".into()], vec!["n.txt".into()]).unwrap();
    assert_eq!(a.id, b.id);
    assert_ne!(a.id, c.id);
    assert!(a.id.starts_with("wc-"));
    assert!(TaskSpec::command("x", vec![], vec![]).is_err());
    assert!(TaskSpec::command("x", vec!["../a".into()], vec!["o".into()]).is_err());
    assert!(TaskSpec::command("x", vec!["/abs".into()], vec!["o".into()]).is_err());
}

fn map_reduce(n: usize) -> Vec<Arc<TaskSpec>> {
    let defs = ["fn count(t) = t", "fn merge(xs) = xs"];
    let maps: Vec<Arc<TaskSpec>> =
        (0..n).map(|i| Arc::new(fn_task("count", vec![Data::Int(i as i64)], &defs))).collect();
    let reduce = fn_task("merge", vec![Data::List(maps.iter().cloned().map(Data::Task).collect())], &defs);
    let mut all = maps;
    all.push(Arc::new(reduce));
    all
}

#[test]
fn dag_of_map_reduce() {
    let subs = map_reduce(12);
    let dag = build_dag(&subs).unwrap();
    assert_eq!(dag.len(), 13);
    let reduce = &subs[12].id;
    assert_eq!(dag.parents[reduce].len(), 12);
    assert_eq!(dag.order.last(), Some(reduce));
    let order: Vec<&String> = dag.order.iter().take(12).collect();
    let expected: Vec<&String> = subs[..12].iter().map(|s| &s.id).collect();
    assert_eq!(order, expected);
    assert_eq!(dag.ancestors(core::slice::from_ref(reduce)).len(), 13);
}

#[test]
fn dag_includes_unsubmitted_parents() {
    let subs = map_reduce(3);
    let dag = build_dag(&subs[3..]).unwrap();
    assert_eq!(dag.len(), 4);
}

#[test]
fn dag_links_file_producers() {
    let a = Arc::new(TaskSpec::command("gen", vec![], vec!["x.txt".into()]).unwrap());
    let b = Arc::new(TaskSpec::command("wc x.txt", vec!["x.txt".into()], vec!["y.txt".into()]).unwrap());
    let dag = build_dag(&[b.clone(), a.clone()]).unwrap();
    assert_eq!(dag.order, vec![a.id.clone(), b.id.clone()]);
    assert!(dag.parents[&b.id].contains(&a.id));
}

#[test]
fn dag_rejects_conflicts_and_cycles() {
    let a = Arc::new(TaskSpec::command("one", vec![], vec!["x.txt".into()]).unwrap());
    let b = Arc::new(TaskSpec::command("two", vec![], vec!["x.txt".into()]).unwrap());
    assert!(matches!(build_dag(&[a, b]), Err(DagError::OutputConflict { .. })));
    let p = Arc::new(TaskSpec::command("p", vec!["y.txt".into()], vec!["x.txt".into()]).unwrap());
    let q = Arc::new(TaskSpec::command("q", vec!["x.txt".into()], vec!["y.txt".into()]).unwrap());
    match build_dag(&[p.clone(), q.clone()]) {
        Err(DagError::Cycle(ids)) => {
            assert!(ids.contains(&p.id) && ids.contains(&q.id));
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn seventeen_task_climate_graph() {
    let defs = [
        "fn load(s) = s",
        "fn clean(x) = x",
        "fn anomaly(x) = x",
        "fn agg(x) = x",
        "fn reduce(xs) = xs",
        "fn risk_score(x, i) = x",
    ];
    let t = |f: &str, args: Vec<Data>| Arc::new(fn_task(f, args, &defs));
    let loads: Vec<_> = (0..3).map(|i| t("load", vec![Data::Int(i)])).collect();
    let cleans: Vec<_> = loads.iter().map(|l| t("clean", vec![Data::Task(l.clone())])).collect();
    let anoms: Vec<_> = cleans.iter().map(|l| t("anomaly", vec![Data::Task(l.clone())])).collect();
    let aggs: Vec<_> = anoms.iter().map(|l| t("agg", vec![Data::Task(l.clone())])).collect();
    let r13 = t("reduce", vec![Data::List(aggs.iter().cloned().map(Data::Task).collect())]);
    let risks: Vec<_> = (0..3).map(|i| t("risk_score", vec![Data::Task(r13.clone()), Data::Int(i)])).collect();
    let r17 = t("reduce", vec![Data::List(risks.iter().cloned().map(Data::Task).collect())]);
    let dag = build_dag(core::slice::from_ref(&r17)).unwrap();
    assert_eq!(dag.len(), 17);
    assert_eq!(dag.parents.values().map(BTreeSet::len).sum::<usize>(), 3 * 3 + 3 + 3 + 3);
    assert_eq!(dag.ancestors(core::slice::from_ref(&r17.id)).len(), 17);
    let pos = |id: &String| dag.order.iter().position(|o| o == id).unwrap();
    for (child, ps) in &dag.parents {
        for p in ps {
            assert!(pos(p) < pos(child));
        }
    }
}
