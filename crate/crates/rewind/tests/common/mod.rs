//! Fixture notebooks with their input files, shared by the integration
//! tests and the acceptance run.

#![allow(dead_code)]

pub mod fuzz;

use std::path::{Path, PathBuf};

use rewind::orchestrator::RunConfig;
use rewind::{Cell, ExecConfig, Notebook};
use rewind_core::interp::{observe, KernelState, Observation};

pub struct Fixture {
    pub name: &'static str,
    pub notebook: Notebook,
    pub files: Vec<(String, Vec<u8>)>,
    /// Edited versions of the notebook, by label.
    pub edits: Vec<(&'static str, Notebook)>,
}

impl Fixture {
    /// A fresh workspace directory holding the fixture's input files.
    pub fn workspace(&self) -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        self.write_inputs(dir.path());
        dir
    }

    pub fn write_inputs(&self, root: &Path) {
        for (rel, bytes) in &self.files {
            let p = root.join(rel);
            std::fs::create_dir_all(p.parent().unwrap()).unwrap();
            std::fs::write(p, bytes).unwrap();
        }
    }

    pub fn edit(&self, label: &str) -> &Notebook {
        &self.edits.iter().find(|(l, _)| *l == label).expect("known edit").1
    }
}

pub fn nb(cells: &[(&str, &str)]) -> Notebook {
    Notebook::new(cells.iter().map(|(id, code)| Cell { id: id.to_string(), code: code.to_string() }).collect())
}

/// Replace the code of one cell.
pub fn with_cell(n: &Notebook, id: &str, code: &str) -> Notebook {
    let mut out = n.clone();
    let i = out.index_of(id).expect("cell exists");
    out.cells[i].code = code.to_string();
    out
}

pub fn config() -> RunConfig {
    RunConfig { exec: ExecConfig { workers: 2, ..ExecConfig::default() }, ..RunConfig::default() }
}

/// Bundle location next to (not inside) a workspace.
pub fn bundle_dir(tmp: &tempfile::TempDir) -> PathBuf {
    tmp.path().join("bundle")
}

/// Observation of every bound name.
pub fn observe_all(state: &KernelState) -> Observation {
    let names: Vec<String> = state.names().cloned().collect();
    observe(state, &names)
}

/// Deterministic word soup for input files.
pub fn words(seed: u64, n: usize) -> String {
    const VOCAB: [&str; 16] = [
        "alpha", "beta", "gamma", "delta", "storm", "river", "north", "south", "cloud", "rain", "heat", "wind",
        "basin", "ridge", "coast", "delta",
    ];
    let mut x = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    let mut out = String::new();
    for i in 0..n {
        x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        out.push_str(VOCAB[(x >> 33) as usize % VOCAB.len()]);
        out.push(if i % 9 == 8 { '\n' } else { ' ' });
    }
    out.push('\n');
    out
}

fn quoted_list(items: &[String]) -> String {
    let q: Vec<String> = items.iter().map(|s| format!("\"{s}\"")).collect();
    format!("[{}]", q.join(", "))
}

/// 12 map tasks and one reduce task over word-count partitions.
pub fn map_reduce() -> Fixture {
    let parts: Vec<String> = (0..12).map(|i| format!("data/part{i:02}.txt")).collect();
    let files = parts.iter().enumerate().map(|(i, p)| (p.clone(), words(i as u64, 60).into_bytes())).collect();
    let docs = format!("docs = {}", quoted_list(&parts));
    let notebook = nb(&[
        ("c1", &docs),
        ("c2", "fn count_words(path) = tally(words(lower(read_text(path))))"),
        ("c3", "fn map_task(path) = task_fn(count_words, [path], [path])"),
        ("c4", "fn merge(parts) = merge_counts(parts)"),
        ("c5", "map_tasks = map(map_task, docs)"),
        ("c6", "reduce_task = task_fn(merge, [map_tasks])"),
        ("c7", "totals = compute(reduce_task)\nshow(\"distinct words:\", len(totals))"),
        ("c8", "report = write_text(\"out/wordcount.txt\", str(totals))\nshow(\"wrote\", report)"),
    ]);
    let edits = vec![("modify-reduce", with_cell(&notebook, "c4", "fn merge(parts) = merge_counts(slice(parts, 1, 12))"))];
    Fixture { name: "mapreduce", notebook, files, edits }
}

/// `n` tiles convolved with each kernel.
pub fn dconv() -> Fixture {
    let one = "kernels = [[[1, 0], [0, -1]]]";
    let two = "kernels = [[[1, 0], [0, -1]], [[0, 1], [2, 0]]]";
    let notebook = nb(&[
        ("c1", "n = 16"),
        ("c2", one),
        ("c3", "fn tile(i) = grid(8, 8, i)"),
        ("c4", "fn conv(i, k) = sum(map(row_total, convolve(tile(i), k)))\nfn row_total(r) = sum(r)"),
        ("c5", "fn conv_task(p) = task_fn(conv, p)"),
        ("c6", "tasks = map(conv_task, product(range(n), kernels))"),
        ("c7", "results = compute(tasks)\nshow(\"tiles:\", len(results), \"total:\", sum(results))\nwrite_text(\"out/conv.txt\", str(results))"),
    ]);
    let edits = vec![("add-kernel", with_cell(&notebook, "c2", two))];
    Fixture { name: "dconv", notebook, files: Vec::new(), edits }
}

/// Shell tasks: split documents into tokens, index them, answer a query.
pub fn rag() -> Fixture {
    let names: Vec<String> = (0..5).map(|i| format!("doc{i}.txt")).collect();
    let files = names.iter().enumerate().map(|(i, n)| (format!("docs/{n}"), words(100 + i as u64, 40).into_bytes())).collect();
    let notebook = nb(&[
        ("c1", &format!("names = {}", quoted_list(&names))),
        ("c2", "fn chunk(name) = task_cmd(\"awk '{for (i = 1; i <= NF; i++) print $i}' docs/\" ++ name ++ \" > chunks/\" ++ name, [\"docs/\" ++ name], [\"chunks/\" ++ name])\nfn chunk_file(name) = \"chunks/\" ++ name"),
        ("c3", "chunks = map(chunk, names)\nchunk_files = map(chunk_file, names)"),
        ("c4", "index = task_cmd(\"cat \" ++ join(chunk_files, \" \") ++ \" | LC_ALL=C sort | LC_ALL=C uniq -c > out/index.txt\", chunk_files, [\"out/index.txt\"])"),
        ("c5", "query = \"storm\""),
        ("c6", "answer = task_cmd(\"grep -w \" ++ query ++ \" out/index.txt > out/answer.txt\", [\"out/index.txt\"], [\"out/answer.txt\"])\ncompute(answer)\nshow(trim(read_text(\"out/answer.txt\")))"),
    ]);
    let edits = vec![("change-query", with_cell(&notebook, "c5", "query = \"river\""))];
    Fixture { name: "rag", notebook, files, edits }
}

/// Eleven cells around a connected client and an aliased table.
pub fn dv5() -> Fixture {
    let mut csv = String::from("date,region,amount\n");
    for i in 0..24 {
        let region = ["north", "south", "east", "west"][i % 4];
        csv.push_str(&format!("2024-01-{:02},{region},{}.{}\n", 1 + i / 4, 10 + (i * 7) % 13, i % 10));
    }
    let notebook = nb(&[
        ("c1", "client = connect(\"tcp://scheduler:8786\")"),
        ("c2", "fn parse_row(line) = split(line, \",\")\nfn amount(row) = float(row[2])\nfn region(row) = row[1]"),
        ("c3", "ddf = lines(read_text(\"data/sales.csv\"))"),
        ("c4", "df = map(parse_row, slice(ddf, 1, len(ddf)))"),
        ("c5", "raw_df = df"),
        ("c6", "daily_stats = {\"rows\": len(raw_df), \"total\": sum(map(amount, raw_df))}\nshow(\"stats\", daily_stats)"),
        ("c7", "push(df, [\"2024-01-09\", \"west\", \"12.5\"])"),
        ("c8", "regions = tally(map(region, df))"),
        ("c9", "fn summarize(rows) = {\"rows\": len(rows), \"total\": sum(map(amount, rows))}\nsummary_task = task_fn(summarize, [raw_df])"),
        ("c10", "summary = compute(summary_task)\nshow(\"summary\", summary)"),
        ("c11", "write_text(\"out/dv5.txt\", str(regions) ++ \" \" ++ str(summary))\nshow(\"regions\", regions, \"via\", client)"),
    ]);
    let edits = vec![
        ("extra-row", with_cell(&notebook, "c7", "push(df, [\"2024-01-09\", \"west\", \"99.5\"])")),
        ("new-summary", with_cell(&notebook, "c9", "fn summarize(rows) = {\"rows\": len(rows), \"mean\": mean(map(amount, rows))}\nsummary_task = task_fn(summarize, [raw_df])")),
    ];
    Fixture { name: "dv5", notebook, files: vec![("data/sales.csv".into(), csv.into_bytes())], edits }
}

fn station_ids(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("s{i:02}")).collect()
}

/// Per-station cleaning (shell) and trend (function) chains plus one
/// aggregation.
pub fn ctrend() -> Fixture {
    let mut files = Vec::new();
    for (i, s) in station_ids(12).iter().enumerate() {
        let mut text = String::new();
        for d in 0..30 {
            if (d + i) % 7 == 3 {
                text.push_str("NA\n");
            } else {
                text.push_str(&format!("{}.{}\n", 10 + (d * (i + 3)) % 17, (d + i) % 10));
            }
        }
        files.push((format!("raw/{s}.csv"), text.into_bytes()));
    }
    let stations = |n| format!("stations = {}", quoted_list(&station_ids(n)));
    let notebook = nb(&[
        ("c1", &stations(10)),
        ("c2", "fn clean(s) = task_cmd(\"grep -v NA raw/\" ++ s ++ \".csv > clean/\" ++ s ++ \".csv\", [\"raw/\" ++ s ++ \".csv\"], [\"clean/\" ++ s ++ \".csv\"])"),
        ("c3", "fn to_f(x) = float(x)\nfn readings(path) = map(to_f, lines(read_text(path)))\nfn trend(s, files) = {\"station\": s, \"mean\": mean(readings(files[0])), \"peak\": max(readings(files[0]))}"),
        ("c4", "fn trend_task(pair) = task_fn(trend, pair, [\"clean/\" ++ pair[0] ++ \".csv\"])"),
        ("c5", "cleaned = map(clean, stations)\ntrends = map(trend_task, zip(stations, cleaned))"),
        ("c6", "fn mean_of(t) = t[\"mean\"]\nfn aggregate(ts) = {\"stations\": len(ts), \"mean\": mean(map(mean_of, ts))}"),
        ("c7", "agg = task_fn(aggregate, [trends], [], [])\nsummary = compute(agg)\nshow(\"summary\", summary)\nwrite_text(\"out/ctrend.txt\", str(summary))"),
    ]);
    let edits = vec![("add-stations", with_cell(&notebook, "c1", &stations(12)))];
    Fixture { name: "ctrend", notebook, files, edits }
}

/// Load, clean, anomaly and aggregation per station, a combine step, three
/// risk-score tasks and a final persist step: 17 tasks.
pub fn climate() -> Fixture {
    let mut files = Vec::new();
    for (i, s) in ["north", "south", "east"].iter().enumerate() {
        let mut text = String::new();
        for d in 0..20 {
            if (d + i) % 6 == 0 {
                text.push_str("NA\n");
            } else {
                text.push_str(&format!("{}\n", 5 + (d * 3 + i * 5) % 19));
            }
        }
        files.push((format!("data/{s}.csv"), text.into_bytes()));
    }
    let defs = |threshold: &str| {
        format!(
            "fn load(path) = lines(read_text(path))\n\
             fn not_null(r) = r != \"NA\"\n\
             fn drop_nulls(rows) = filter(not_null, rows)\n\
             fn to_f(r) = float(r)\n\
             fn below(x) = x - 10.0\n\
             fn anomaly(rows) = map(below, map(to_f, rows))\n\
             fn agg(xs) = {{\"n\": len(xs), \"mean\": mean(xs)}}\n\
             fn combine(parts) = parts\n\
             fn risk_score(parts, i) = (parts[i][\"mean\"] + 10.0) / {threshold}\n\
             fn persist(scores) = write_text(\"out/risk.txt\", str(scores))\n\
             fn load_task(s) = task_fn(load, [\"data/\" ++ s ++ \".csv\"], [\"data/\" ++ s ++ \".csv\"])\n\
             fn clean_task(t) = task_fn(drop_nulls, [t])\n\
             fn anomaly_task(t) = task_fn(anomaly, [t])\n\
             fn agg_task(t) = task_fn(agg, [t])\n\
             fn risk_task(p) = task_fn(risk_score, p)"
        )
    };
    let notebook = nb(&[
        ("c1", "stations = [\"north\", \"south\", \"east\"]"),
        ("c2", &defs("10.0")),
        (
            "c3",
            "loads = map(load_task, stations)\n\
             cleans = map(clean_task, loads)\n\
             anoms = map(anomaly_task, cleans)\n\
             aggs = map(agg_task, anoms)\n\
             combined = task_fn(combine, [aggs])\n\
             risks = map(risk_task, zip([combined, combined, combined], range(3)))\n\
             final_task = task_fn(persist, [risks], [], [\"out/risk.txt\"])\n\
             result = compute(final_task)\n\
             show(\"risk written to\", result)",
        ),
    ]);
    let edits = vec![("modify-risk", with_cell(&notebook, "c2", &defs("8.0")))];
    Fixture { name: "climate", notebook, files, edits }
}

/// One 1 MiB value touched by three cells.
pub fn dedup() -> Fixture {
    let mut big = String::with_capacity(1 << 20);
    let line = "0123456789abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ-_\n";
    while big.len() + line.len() <= 1 << 20 {
        big.push_str(line);
    }
    while big.len() < 1 << 20 {
        big.push('.');
    }
    let notebook = nb(&[
        ("c1", "big = read_text(\"data/big.txt\")"),
        ("c2", "n = len(big)"),
        ("c3", "head = slice(big, 0, 16)\nshow(n, head)"),
    ]);
    let edits = vec![("touch-head", with_cell(&notebook, "c3", "head = slice(big, 0, 8)\nshow(n, head)"))];
    Fixture { name: "dedup", notebook, files: vec![("data/big.txt".into(), big.into_bytes())], edits }
}

/// The five table fixtures.
pub fn table_fixtures() -> Vec<Fixture> {
    vec![dv5(), map_reduce(), dconv(), rag(), ctrend()]
}

pub fn all_fixtures() -> Vec<Fixture> {
    let mut v = table_fixtures();
    v.push(climate());
    v.push(dedup());
    v
}

/// Ids of the task (or list of tasks) bound to `name`.
pub fn task_ids(state: &KernelState, name: &str) -> Vec<String> {
    let v = state.get(name).unwrap_or_else(|| panic!("{name} unbound"));
    match state.to_data(v).unwrap() {
        rewind_core::Data::List(items) => items
            .into_iter()
            .map(|d| match d {
                rewind_core::Data::Task(t) => t.id.clone(),
                other => panic!("{name}: {other:?}"),
            })
            .collect(),
        rewind_core::Data::Task(t) => vec![t.id.clone()],
        other => panic!("{name}: {other:?}"),
    }
}
