use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use rewind::bundle::Bundle;
use rewind::orchestrator::{self, CellAction, RepeatReport, RunConfig, RunError};
use rewind::{ExecConfig, Notebook};
use rewind_core::{Canonicalizer, Value};

/// Run notebooks with checkpoints and a task cache, then replay them.
#[derive(Debug, Parser)]
#[command(name = "rewind", version)]
struct Cli {
    /// Directory the notebook reads and writes.
    #[arg(long, global = true, env = "REWIND_WORKSPACE", default_value = ".")]
    workspace: PathBuf,
    /// Bundle directory.
    #[arg(long, global = true, env = "REWIND_BUNDLE", default_value = "bundle")]
    bundle: PathBuf,
    /// Task worker threads.
    #[arg(long, global = true, env = "REWIND_WORKERS", default_value_t = 2)]
    workers: usize,
    /// Artificial delay before every executed task.
    #[arg(long, global = true, env = "REWIND_TASK_DELAY_MS", default_value_t = 0)]
    task_delay_ms: u64,
    /// Write the report as JSON to this file.
    #[arg(long, global = true)]
    report_json: Option<PathBuf>,
    /// Only strip generated suffixes from function-task arguments, not from
    /// command text. On repeat this overrides what the bundle recorded.
    #[arg(long = "strict-paper-canonicalization", global = true)]
    strict_canonicalization: bool,
    /// Run tasks directly in the workspace instead of a staging directory.
    #[arg(long, global = true)]
    no_sandbox: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Execute a notebook, recording checkpoints and tasks into the bundle.
    Audit { notebook: PathBuf },
    /// Re-run a (possibly edited) notebook against the bundle.
    Repeat { notebook: PathBuf },
    /// Restore the state after an audited cell.
    Rollback {
        /// Cell index (0-based) or cell id.
        #[arg(long)]
        cell: String,
        /// Then execute the remaining audited cells.
        #[arg(long)]
        run: bool,
    },
    /// Show checkpoint sizes, deduplication and the task log.
    Inspect,
    /// Re-hash every blob and check all references.
    Verify,
    /// Remove blobs and log entries the latest audit does not use.
    Gc,
}

/// Failure with a specific exit status.
#[derive(Debug)]
struct Exit(u8);

impl std::fmt::Display for Exit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "exit status {}", self.0)
    }
}

impl std::error::Error for Exit {}

const EXIT_FAILURE: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_CORRUPT: u8 = 3;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = exit_code(&e);
            if e.downcast_ref::<Exit>().is_none() {
                eprintln!("error: {e:#}");
            }
            ExitCode::from(code)
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    if let Some(Exit(c)) = e.downcast_ref::<Exit>() {
        return *c;
    }
    match e.downcast_ref::<RunError>() {
        Some(RunError::Notebook(_) | RunError::Argument(_)) => EXIT_USAGE,
        Some(r) if r.is_corruption() => EXIT_CORRUPT,
        Some(_) => EXIT_FAILURE,
        None => match e.downcast_ref::<rewind::BundleError>() {
            Some(b) if b.is_corruption() => EXIT_CORRUPT,
            Some(rewind::BundleError::NotABundle(_)) => EXIT_USAGE,
            _ => EXIT_FAILURE,
        },
    }
}

fn config(cli: &Cli) -> RunConfig {
    RunConfig {
        exec: ExecConfig {
            workers: cli.workers.max(1),
            task_delay_ms: cli.task_delay_ms,
            sandbox: !cli.no_sandbox,
            sandbox_root: None,
        },
        canonicalizer: if cli.strict_canonicalization { Canonicalizer::strict() } else { Canonicalizer::default() },
        force_canonicalizer: cli.strict_canonicalization,
    }
}

fn load_notebook(path: &Path) -> Result<Notebook, RunError> {
    Notebook::load(path).map_err(RunError::from)
}

fn write_report<T: serde::Serialize>(cli: &Cli, report: &T) -> anyhow::Result<()> {
    if let Some(path) = &cli.report_json {
        let text = serde_json::to_string_pretty(report)?;
        std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    if !cli.workspace.is_dir() {
        return Err(RunError::Argument(format!("workspace {} is not a directory", cli.workspace.display())).into());
    }
    let cfg = config(cli);
    match &cli.command {
        Command::Audit { notebook } => {
            let nb = load_notebook(notebook)?;
            let out = orchestrator::audit_run(&nb, &cli.workspace, &cli.bundle, &cfg);
            match out {
                Ok(a) => {
                    println!("{:<16} {:>10} {:>12} {:>8}", "cell", "time (ms)", "checkpoint", "entries");
                    for (c, m) in a.record.cells.iter().zip(&a.manifests) {
                        println!("{:<16} {:>10} {:>12} {:>8}", c.cell_id, c.wall_time_ms, c.checkpoint_bytes, m.entries.len());
                    }
                    println!(
                        "tasks: {} submitted, {} cached, {} executed; {} ms total",
                        a.record.tasks_submitted, a.record.tasks_cached, a.record.tasks_executed, a.record.wall_time_ms
                    );
                    for w in &a.warnings {
                        eprintln!("warning: {w}");
                    }
                    write_report(cli, &a.record)
                }
                Err(e) => {
                    if let Ok(audit) = Bundle::open(&cli.bundle).and_then(|b| b.read_audit()) {
                        write_report(cli, &audit)?;
                    }
                    Err(e.into())
                }
            }
        }
        Command::Repeat { notebook } => {
            let nb = load_notebook(notebook)?;
            match orchestrator::repeat_run(&nb, &cli.workspace, &cli.bundle, &cfg) {
                Ok(out) => {
                    print_repeat(&out.report);
                    write_report(cli, &out.report)?;
                    if let Some(f) = &out.report.failure {
                        eprintln!("error: cell {} failed: {}", f.cell_id, f.message);
                        return Err(Exit(EXIT_FAILURE).into());
                    }
                    Ok(())
                }
                Err(e) if e.is_corruption() => {
                    eprintln!("error: {e}");
                    if let Ok(r) = Bundle::open(&cli.bundle).and_then(|b| b.verify()) {
                        for p in &r.problems {
                            eprintln!("  {p}");
                        }
                    }
                    Err(Exit(EXIT_CORRUPT).into())
                }
                Err(e) => Err(e.into()),
            }
        }
        Command::Rollback { cell, run } => {
            let bundle = Bundle::open(&cli.bundle)?;
            let audit = bundle.read_audit()?;
            let k = orchestrator::cell_index(&audit, cell)?;
            let mut rb = orchestrator::rollback(&cli.bundle, k, &cli.workspace, &cfg)?;
            println!("state after cell {} ({}):", k, audit.cells[k].cell_id);
            for (name, v) in rb.state.env() {
                let shown = match v {
                    Value::Handle(h) => format!("<handle {}>", h.uri),
                    _ => rb.state.to_data(v).map(|d| d.render()).unwrap_or_else(|e| format!("<{e}>")),
                };
                println!("  {name} = {}", truncate(&shown, 120));
            }
            if *run {
                let suffix = rb.suffix.clone();
                let outs = rb.run(&suffix)?;
                for (c, out) in suffix.iter().zip(outs) {
                    println!("[{}]", c.id);
                    print!("{out}");
                }
            }
            Ok(())
        }
        Command::Inspect => {
            let bundle = Bundle::open(&cli.bundle)?;
            let r = bundle.inspect()?;
            for c in &r.cells {
                println!("{} {} ({} bytes)", c.seq, c.cell_id, c.bytes);
                for e in &c.entries {
                    let size = if e.serializable { e.size.to_string() } else { "handle".into() };
                    println!("    {:<20} {:<8} {:>10}", e.name, e.kind, size);
                }
            }
            println!("{:<28} {:>12}", "pre-dedup bytes", r.pre_dedup_bytes);
            println!("{:<28} {:>12}", "post-dedup bytes", r.post_dedup_bytes);
            println!("{:<28} {:>12.3}", "dedup ratio", r.ratio);
            println!("{:<28} {:>12}", "intermediate files", r.intermediate_files);
            println!("{:<28} {:>12}", "intermediate bytes", r.intermediate_bytes);
            println!("{:<28} {:>12}", "log entries", r.log_entries);
            println!("{:<28} {:>12}", "distinct fingerprints", r.log_fingerprints);
            write_report(cli, &r)
        }
        Command::Verify => {
            let bundle = Bundle::open(&cli.bundle)?;
            let r = bundle.verify()?;
            write_report(cli, &r)?;
            if r.ok() {
                println!("ok: {} blobs, {} log entries", r.blobs_checked, r.log_entries);
                Ok(())
            } else {
                for p in &r.problems {
                    println!("{p}");
                }
                Err(Exit(EXIT_CORRUPT).into())
            }
        }
        Command::Gc => {
            let bundle = Bundle::open(&cli.bundle)?;
            let _lock = bundle.lock()?;
            let r = bundle.gc()?;
            println!(
                "removed {} manifests, {} blobs, {} log entries, {} cache blobs ({} bytes)",
                r.manifests_removed, r.blobs_removed, r.log_entries_removed, r.cache_blobs_removed, r.bytes_freed
            );
            write_report(cli, &r)
        }
    }
}

fn print_repeat(r: &RepeatReport) {
    for c in &r.cells {
        let action = match c.action {
            CellAction::Restored => "restored",
            CellAction::Executed => "executed",
        };
        match &c.reason {
            Some(why) => println!("[{}] {action} ({why})", c.cell_id),
            None => println!("[{}] {action}", c.cell_id),
        }
        print!("{}", c.stdout);
    }
    for id in &r.cells_removed {
        println!("[{id}] removed");
    }
    println!(
        "cells: {} restored, {} executed; tasks: {} submitted, {} cached, {} executed ({:.1}% cached); {} ms",
        r.cells_restored.len(),
        r.cells_executed.len(),
        r.tasks_submitted,
        r.tasks_cached,
        r.tasks_executed,
        r.hit_rate * 100.0,
        r.wall_time_ms
    );
    for w in &r.warnings {
        eprintln!("warning: {w}");
    }
}

fn truncate(s: &str, n: usize) -> String {
    match s.char_indices().nth(n) {
        Some((i, _)) => format!("{}...", &s[..i]),
        None => s.to_string(),
    }
}
