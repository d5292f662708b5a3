mod common;

use common::*;
use rewind::orchestrator::{audit_run, baseline_run, detect_changes, repeat_run, ChangeStatus};

#[test]
fn every_fixture_audits_and_replays_unchanged() {
    for fx in all_fixtures() {
        let ws = fx.workspace();
        let tmp = tempfile::tempdir().unwrap();
        let bundle = bundle_dir(&tmp);
        let audit = audit_run(&fx.notebook, ws.path(), &bundle, &config()).unwrap_or_else(|e| panic!("{}: {e}", fx.name));
        let rep = repeat_run(&fx.notebook, ws.path(), &bundle, &config()).unwrap().report;
        assert!(rep.failure.is_none(), "{}: {:?}", fx.name, rep.failure);
        assert_eq!(rep.cells_executed, Vec::<String>::new(), "{}: {:?}", fx.name, rep.cells);
        assert_eq!(rep.tasks_executed, 0, "{}", fx.name);
        assert_eq!(rep.tasks_cached, audit.record.tasks_submitted, "{}", fx.name);
        assert_eq!(rep.outputs, audit.outputs, "{}", fx.name);
        let audited: Vec<&str> = audit.record.cells.iter().map(|c| c.stdout.as_str()).collect();
        let replayed: Vec<&str> = rep.cells.iter().map(|c| c.stdout.as_str()).collect();
        assert_eq!(audited, replayed, "{}", fx.name);
    }
}

fn expected_audit_tasks(name: &str) -> usize {
    match name {
        "dv5" => 1,
        "mapreduce" => 13,
        "dconv" => 16,
        "rag" => 7,
        "ctrend" => 21,
        "climate" => 17,
        "dedup" => 0,
        other => panic!("unknown fixture {other}"),
    }
}

#[test]
fn audit_executes_every_task_once() {
    for fx in all_fixtures() {
        let ws = fx.workspace();
        let tmp = tempfile::tempdir().unwrap();
        let audit = audit_run(&fx.notebook, ws.path(), &bundle_dir(&tmp), &config()).unwrap();
        let n = expected_audit_tasks(fx.name);
        assert_eq!(audit.record.stats().executed, n, "{}", fx.name);
        assert_eq!(audit.record.stats().submitted, n, "{}", fx.name);
        assert_eq!(audit.manifests.len(), fx.notebook.cells.len());
    }
}

#[test]
fn edits_match_a_fresh_run() {
    for fx in all_fixtures() {
        for (label, edited) in &fx.edits {
            let ws = fx.workspace();
            let tmp = tempfile::tempdir().unwrap();
            let bundle = bundle_dir(&tmp);
            audit_run(&fx.notebook, ws.path(), &bundle, &config()).unwrap();
            let rep = repeat_run(edited, ws.path(), &bundle, &config()).unwrap().report;
            assert!(rep.failure.is_none(), "{}/{label}: {:?}", fx.name, rep.failure);
            let fresh_ws = fx.workspace();
            let fresh = baseline_run(edited, fresh_ws.path(), &config()).unwrap();
            assert_eq!(rep.outputs, fresh.outputs, "{}/{label}", fx.name);
            let stdout: Vec<String> = rep.cells.iter().map(|c| c.stdout.clone()).collect();
            assert_eq!(stdout, fresh.stdout, "{}/{label}", fx.name);
            assert_eq!(observe_all(&rep_state(&fx.notebook, edited, &fx)), observe_all(&fresh.state), "{}/{label}", fx.name);
        }
    }
}

/// Final kernel state of a repeat run of `edited` after auditing `original`.
fn rep_state(original: &rewind::Notebook, edited: &rewind::Notebook, fx: &Fixture) -> rewind_core::KernelState {
    let ws = fx.workspace();
    let tmp = tempfile::tempdir().unwrap();
    let bundle = bundle_dir(&tmp);
    audit_run(original, ws.path(), &bundle, &config()).unwrap();
    repeat_run(edited, ws.path(), &bundle, &config()).unwrap().state
}

#[test]
fn detect_changes_matches_cells_by_id() {
    let fx = map_reduce();
    let ws = fx.workspace();
    let tmp = tempfile::tempdir().unwrap();
    let audit = audit_run(&fx.notebook, ws.path(), &bundle_dir(&tmp), &config()).unwrap().record;
    assert!(detect_changes(&fx.notebook, &audit).iter().all(|(_, s)| *s == ChangeStatus::Unchanged));

    let edited = fx.edit("modify-reduce");
    let changed: Vec<_> = detect_changes(edited, &audit).into_iter().filter(|(_, s)| *s != ChangeStatus::Unchanged).collect();
    assert_eq!(changed, vec![("c4".to_string(), ChangeStatus::Modified)]);

    let mut appended = fx.notebook.clone();
    appended.cells.push(rewind::Cell { id: "c9".into(), code: "x = 1".into() });
    appended.cells.remove(0);
    let ch = detect_changes(&appended, &audit);
    assert_eq!(ch[ch.len() - 2], ("c9".to_string(), ChangeStatus::Added));
    assert_eq!(ch[ch.len() - 1], ("c1".to_string(), ChangeStatus::Removed));
}

fn audit_then_repeat(fx: &Fixture, edit: &str) -> rewind::RepeatReport {
    let ws = fx.workspace();
    let tmp = tempfile::tempdir().unwrap();
    let bundle = bundle_dir(&tmp);
    audit_run(&fx.notebook, ws.path(), &bundle, &config()).unwrap();
    repeat_run(fx.edit(edit), ws.path(), &bundle, &config()).unwrap().report
}

#[test]
fn modified_reduce_reuses_every_map_task() {
    let rep = audit_then_repeat(&map_reduce(), "modify-reduce");
    assert_eq!((rep.tasks_submitted, rep.tasks_cached, rep.tasks_executed), (13, 12, 1));
    assert_eq!(rep.cells_executed, ["c4", "c6", "c7", "c8"]);
    assert_eq!(rep.cells_restored, ["c1", "c2", "c3", "c5"]);
    assert!((rep.hit_rate - 12.0 / 13.0).abs() < 1e-12);
}

#[test]
fn second_kernel_halves_the_hit_rate() {
    let rep = audit_then_repeat(&dconv(), "add-kernel");
    assert_eq!((rep.tasks_submitted, rep.tasks_cached, rep.tasks_executed), (32, 16, 16));
}

#[test]
fn new_stations_reuse_old_chains() {
    let rep = audit_then_repeat(&ctrend(), "add-stations");
    assert_eq!((rep.tasks_submitted, rep.tasks_cached, rep.tasks_executed), (25, 20, 5));
}

#[test]
fn restored_cells_never_run_and_clean_cells_stay_restored() {
    // Editing the last cell of the dedup fixture leaves the others restored.
    let rep = audit_then_repeat(&dedup(), "touch-head");
    assert_eq!(rep.cells_restored, ["c1", "c2"]);
    assert_eq!(rep.cells_executed, ["c3"]);
}

#[test]
fn a_cell_may_mutate_what_it_bound() {
    let n = nb(&[("c1", "xs = [1]\nys = xs\npush(xs, 2)"), ("c2", "show(ys)")]);
    let ws = tempfile::tempdir().unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let bundle = bundle_dir(&tmp);
    audit_run(&n, ws.path(), &bundle, &config()).unwrap();
    let rep = repeat_run(&n, ws.path(), &bundle, &config()).unwrap().report;
    assert_eq!(rep.cells_restored, ["c1", "c2"]);
    assert_eq!(rep.cells[1].stdout, "[1, 2]\n");
}

#[test]
fn mutation_through_an_alias_dirties_both_names() {
    let fx = dv5();
    let rep = audit_then_repeat(&fx, "extra-row");
    // c7 pushes into df, which raw_df aliases: every later reader re-runs.
    assert_eq!(rep.cells_restored, ["c1", "c2", "c3", "c4", "c5", "c6"]);
    assert_eq!(rep.cells_executed, ["c7", "c8", "c9", "c10", "c11"]);
    assert_eq!(rep.tasks_executed, 1);
}

#[test]
fn risk_edit_reruns_only_the_last_four_tasks() {
    let fx = climate();
    let ws = fx.workspace();
    let tmp = tempfile::tempdir().unwrap();
    let bundle = bundle_dir(&tmp);
    audit_run(&fx.notebook, ws.path(), &bundle, &config()).unwrap();
    let out = repeat_run(fx.edit("modify-risk"), ws.path(), &bundle, &config()).unwrap();
    let ids = |name: &str| task_ids(&out.state, name);
    let first: Vec<String> = ["loads", "cleans", "anoms", "aggs", "combined"].iter().flat_map(|n| ids(n)).collect();
    let last: Vec<String> = ["risks", "final_task"].iter().flat_map(|n| ids(n)).collect();
    assert_eq!(first.len(), 13);
    assert_eq!(last.len(), 4);
    assert_eq!(out.report.cached_tasks(), first.into_iter().collect());
    assert_eq!(out.report.executed_tasks(), last.into_iter().collect());
}

mod invalidation {
    use super::*;
    use proptest::prelude::*;
    use rewind::{Cell, CheckpointError, Notebook, RunError};

    fn statement() -> impl Strategy<Value = String> {
        let var = prop::sample::select(vec!["a", "b", "c", "d"]);
        prop_oneof![
            (var.clone(), 0i64..4).prop_map(|(v, n)| format!("{v} = [{n}]")),
            (var.clone(), var.clone()).prop_map(|(v, w)| format!("{v} = {w}")),
            (var.clone(), 0i64..4).prop_map(|(v, n)| format!("push({v}, {n})")),
            (var.clone(), var.clone()).prop_map(|(v, w)| format!("push({v}, {w})")),
            (var.clone(), var.clone()).prop_map(|(v, w)| format!("{v} = [{w}, {w}]")),
            (var.clone(), var.clone()).prop_map(|(v, w)| format!("{v} = [len({w}) + 1]")),
            var.clone().prop_map(|v| format!("show({v})")),
            (0i64..3).prop_map(|n| format!("fn f(x) = x + {n}")),
            var.clone().prop_map(|v| format!("{v} = [f(2)]")),
        ]
    }

    fn cell_code() -> impl Strategy<Value = String> {
        prop::collection::vec(statement(), 1..3).prop_map(|s| s.join("\n"))
    }

    /// Every variable starts out as a list, so every generated cell runs.
    fn notebook(codes: &[String]) -> Notebook {
        let mut cells = vec![Cell { id: "init".into(), code: "a = [0]\nb = [1]\nc = [2]\nd = [3]\nfn f(x) = x".into() }];
        cells.extend(codes.iter().enumerate().map(|(i, c)| Cell { id: format!("k{i}"), code: c.clone() }));
        Notebook::new(cells)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn repeat_after_any_single_edit_equals_a_fresh_run(
            codes in prop::collection::vec(cell_code(), 2..6),
            which in any::<prop::sample::Index>(),
            replacement in cell_code(),
        ) {
            let original = notebook(&codes);
            let ws = tempfile::tempdir().unwrap();
            prop_assume!(baseline_run(&original, ws.path(), &config()).is_ok());
            let mut edited_codes = codes.clone();
            edited_codes[which.index(codes.len())] = replacement;
            let edited = notebook(&edited_codes);
            let fresh_ws = tempfile::tempdir().unwrap();
            let fresh = baseline_run(&edited, fresh_ws.path(), &config());
            prop_assume!(fresh.is_ok());
            let fresh = fresh.unwrap();

            let tmp = tempfile::tempdir().unwrap();
            let bundle = bundle_dir(&tmp);
            // Cyclic values cannot be checkpointed.
            let cyclic = |e: &RunError| matches!(e, RunError::Checkpoint(CheckpointError::Cycle(_)));
            let audit = audit_run(&original, ws.path(), &bundle, &config());
            prop_assume!(!matches!(&audit, Err(e) if cyclic(e)));
            audit.unwrap();
            let out = repeat_run(&edited, ws.path(), &bundle, &config());
            prop_assume!(!matches!(&out, Err(e) if cyclic(e)));
            let out = out.unwrap();
            prop_assert!(out.report.failure.is_none());
            let stdout: Vec<String> = out.report.cells.iter().map(|c| c.stdout.clone()).collect();
            prop_assert_eq!(stdout, fresh.stdout);
            prop_assert_eq!(observe_all(&out.state), observe_all(&fresh.state));
            // Cells before the edit are never executed.
            let first = edited_codes.iter().zip(&codes).position(|(a, b)| a != b).unwrap_or(codes.len());
            for c in out.report.cells_executed.iter().filter(|c| c.starts_with('k')) {
                let i: usize = c[1..].parse().unwrap();
                prop_assert!(i >= first, "{} executed before the edit at {}", c, first);
            }
        }
    }
}
