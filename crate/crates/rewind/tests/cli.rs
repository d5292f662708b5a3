mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use common::*;

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

fn rewind(ws: &Path, bundle: &Path, args: &[&str]) -> Run {
    let out: Output = Command::new(env!("CARGO_BIN_EXE_rewind"))
        .arg("--workspace")
        .arg(ws)
        .arg("--bundle")
        .arg(bundle)
        .args(args)
        .env_remove("RUST_LOG")
        .output()
        .unwrap();
    Run {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

/// Workspace with `f`'s inputs and its notebook saved as `nb.json`.
fn setup(f: &Fixture) -> (tempfile::TempDir, std::path::PathBuf) {
    let ws = f.workspace();
    let nb = ws.path().join("nb.json");
    fs::write(&nb, f.notebook.to_json()).unwrap();
    (ws, nb)
}

#[test]
fn audit_then_unchanged_repeat() {
    let f = map_reduce();
    let (ws, nb) = setup(&f);
    let tmp = tempfile::tempdir().unwrap();
    let bundle = bundle_dir(&tmp);
    let nb = nb.to_str().unwrap();

    let a = rewind(ws.path(), &bundle, &["audit", nb]);
    assert_eq!(a.code, 0, "{}", a.stderr);
    assert!(a.stdout.contains("13 submitted, 0 cached, 13 executed"), "{}", a.stdout);

    let report = tmp.path().join("repeat.json");
    let r = rewind(ws.path(), &bundle, &["repeat", nb, "--report-json", report.to_str().unwrap()]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert!(r.stdout.contains("8 restored, 0 executed"), "{}", r.stdout);
    let json: serde_json::Value = serde_json::from_slice(&fs::read(report).unwrap()).unwrap();
    assert_eq!(json["tasks_executed"], 0);
    assert_eq!(json["tasks_cached"], 13);
    assert_eq!(json["cells_executed"].as_array().unwrap().len(), 0);
}

#[test]
fn flags_are_recorded_in_meta() {
    let f = rag();
    let (ws, nb) = setup(&f);
    let tmp = tempfile::tempdir().unwrap();
    let bundle = bundle_dir(&tmp);
    let a = rewind(ws.path(), &bundle, &["--workers", "3", "--task-delay-ms", "1", "audit", nb.to_str().unwrap()]);
    assert_eq!(a.code, 0, "{}", a.stderr);
    let meta: serde_json::Value = serde_json::from_slice(&fs::read(bundle.join("meta.json")).unwrap()).unwrap();
    assert_eq!(meta["config"]["workers"], 3);
    assert_eq!(meta["config"]["task_delay_ms"], 1);
}

#[test]
fn usage_errors_exit_2() {
    let ws = tempfile::tempdir().unwrap();
    let bundle = ws.path().join("bundle");
    assert_eq!(rewind(ws.path(), &bundle, &[]).code, 2);
    assert_eq!(rewind(ws.path(), &bundle, &["audit", "missing.json"]).code, 2);
    fs::write(ws.path().join("bad.json"), "{\"cells\": 3}").unwrap();
    assert_eq!(rewind(ws.path(), &bundle, &["audit", ws.path().join("bad.json").to_str().unwrap()]).code, 2);
    fs::write(ws.path().join("syntax.json"), nb(&[("c1", "x = = 1")]).to_json()).unwrap();
    assert_eq!(rewind(ws.path(), &bundle, &["audit", ws.path().join("syntax.json").to_str().unwrap()]).code, 2);
    assert_eq!(rewind(ws.path(), &bundle, &["inspect"]).code, 2);
    assert_eq!(rewind(&ws.path().join("nope"), &bundle, &["inspect"]).code, 2);
}

#[test]
fn failing_cell_exits_1() {
    let ws = tempfile::tempdir().unwrap();
    let nb_path = ws.path().join("nb.json");
    fs::write(&nb_path, nb(&[("c1", "x = 1"), ("c2", "y = read_text(\"absent.txt\")")]).to_json()).unwrap();
    let bundle = ws.path().join("bundle");
    let a = rewind(ws.path(), &bundle, &["audit", nb_path.to_str().unwrap()]);
    assert_eq!(a.code, 1, "{}", a.stderr);
    assert!(a.stderr.contains("absent.txt"), "{}", a.stderr);
}

#[test]
fn held_lock_exits_1() {
    let f = rag();
    let (ws, nb) = setup(&f);
    let tmp = tempfile::tempdir().unwrap();
    let bundle = bundle_dir(&tmp);
    assert_eq!(rewind(ws.path(), &bundle, &["audit", nb.to_str().unwrap()]).code, 0);
    fs::write(bundle.join(".lock"), "").unwrap();
    let r = rewind(ws.path(), &bundle, &["repeat", nb.to_str().unwrap()]);
    assert_eq!(r.code, 1, "{}", r.stderr);
    assert!(r.stderr.contains("lock"), "{}", r.stderr);
}

#[test]
fn verify_and_corruption_exit_3() {
    let f = dedup();
    let (ws, nb) = setup(&f);
    let tmp = tempfile::tempdir().unwrap();
    let bundle = bundle_dir(&tmp);
    assert_eq!(rewind(ws.path(), &bundle, &["audit", nb.to_str().unwrap()]).code, 0);
    let v = rewind(ws.path(), &bundle, &["verify"]);
    assert_eq!(v.code, 0, "{}", v.stdout);
    assert!(v.stdout.starts_with("ok:"), "{}", v.stdout);

    let blob = fs::read_dir(bundle.join("blobs"))
        .unwrap()
        .flat_map(|d| fs::read_dir(d.unwrap().path()).unwrap())
        .map(|e| e.unwrap().path())
        .max_by_key(|p| fs::metadata(p).unwrap().len())
        .unwrap();
    let mut bytes = fs::read(&blob).unwrap();
    bytes[100] ^= 0x20;
    fs::write(&blob, bytes).unwrap();

    let v = rewind(ws.path(), &bundle, &["verify"]);
    assert_eq!(v.code, 3);
    assert!(v.stdout.contains("does not match its hash"), "{}", v.stdout);
    let r = rewind(ws.path(), &bundle, &["repeat", nb.to_str().unwrap()]);
    assert_eq!(r.code, 3, "{}", r.stderr);
}

#[test]
fn rollback_prints_the_state_and_runs_the_rest() {
    let f = dv5();
    let (ws, nb) = setup(&f);
    let tmp = tempfile::tempdir().unwrap();
    let bundle = bundle_dir(&tmp);
    assert_eq!(rewind(ws.path(), &bundle, &["audit", nb.to_str().unwrap()]).code, 0);

    let r = rewind(ws.path(), &bundle, &["rollback", "--cell", "4"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert!(r.stdout.contains("state after cell 4 (c5)"), "{}", r.stdout);
    assert!(r.stdout.contains("  raw_df = "), "{}", r.stdout);
    assert!(r.stdout.contains("<handle tcp://scheduler:8786>"), "{}", r.stdout);
    assert!(!r.stdout.contains("  regions = "), "{}", r.stdout);

    let r = rewind(ws.path(), &bundle, &["rollback", "--cell", "c5", "--run"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert!(r.stdout.contains("[c11]"), "{}", r.stdout);
    assert_eq!(rewind(ws.path(), &bundle, &["rollback", "--cell", "99"]).code, 2);
}

#[test]
fn inspect_reports_deduplication() {
    let f = dedup();
    let (ws, nb) = setup(&f);
    let tmp = tempfile::tempdir().unwrap();
    let bundle = bundle_dir(&tmp);
    assert_eq!(rewind(ws.path(), &bundle, &["audit", nb.to_str().unwrap()]).code, 0);
    let report = tmp.path().join("inspect.json");
    let r = rewind(ws.path(), &bundle, &["inspect", "--report-json", report.to_str().unwrap()]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert!(r.stdout.contains("dedup ratio"), "{}", r.stdout);
    let json: serde_json::Value = serde_json::from_slice(&fs::read(report).unwrap()).unwrap();
    assert!(json["ratio"].as_f64().unwrap() <= 0.40);
}

#[test]
fn gc_keeps_the_bundle_valid() {
    let f = map_reduce();
    let (ws, nb) = setup(&f);
    let tmp = tempfile::tempdir().unwrap();
    let bundle = bundle_dir(&tmp);
    let edited = ws.path().join("edited.json");
    fs::write(&edited, f.edit("modify-reduce").to_json()).unwrap();
    assert_eq!(rewind(ws.path(), &bundle, &["audit", edited.to_str().unwrap()]).code, 0);
    assert_eq!(rewind(ws.path(), &bundle, &["audit", nb.to_str().unwrap()]).code, 0);
    let g = rewind(ws.path(), &bundle, &["gc"]);
    assert_eq!(g.code, 0, "{}", g.stderr);
    assert!(g.stdout.starts_with("removed "), "{}", g.stdout);
    assert_eq!(rewind(ws.path(), &bundle, &["verify"]).code, 0);
}
