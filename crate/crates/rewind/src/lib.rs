//! Notebook runtime with per-cell incremental checkpoints, rollback, and a
//! task cache that lets a repeat run skip unchanged cells and tasks.
//!
//! The language, interpreter and task model live in `rewind-core`; this
//! crate adds the file system, process execution and the bundle format.

pub mod blobstore;
pub mod bundle;
pub mod checkpoint;
pub mod executor;
pub mod manager;
pub mod notebook;
pub mod orchestrator;
pub mod session;
pub mod tasklog;
pub mod workspace;

pub use blobstore::{BlobStore, StoreError};
pub use bundle::{AuditRecord, Bundle, BundleError, InspectReport, VerifyReport};
pub use checkpoint::{compose_state, make_checkpoint, CheckpointError, Manifest, VarEntry};
pub use executor::{ExecConfig, Executor};
pub use manager::{OutcomeKind, RewindManager, TaskError, TaskOutcome, TaskStats};
pub use notebook::{Cell, Notebook, NotebookError};
pub use orchestrator::{
    audit_run, baseline_run, detect_changes, repeat_run, restore_to_cell, rollback, ChangeStatus, RepeatReport,
    RunConfig, RunError,
};
pub use session::Session;
pub use tasklog::{LogEntry, TransactionLog};
pub use workspace::Workspace;
