//! Pure, allocation-only building blocks of the rewind notebook runtime.
//!
//! This crate holds everything that does not touch the file system or
//! spawn processes: the cell language (lexer, parser, read/write analysis),
//! the kernel interpreter with reference semantics and its reverse alias
//! index, the canonical value encoding used for checkpoint blobs, and the
//! task model (specs, canonicalization, fingerprints, DAG construction).
//!
//! IO lives in the `rewind` crate, which plugs into the interpreter through
//! the [`interp::Host`] trait.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod analysis;
pub mod digest;
pub mod encode;
pub mod interp;
pub mod syntax;
pub mod task;
pub mod value;

pub use analysis::{analyze_rw, analyze_statement, is_builtin, RwInfo};
pub use digest::{sha256, Digest};
pub use encode::{decode_data, encode_data, DecodeError};
pub use interp::{ExecResult, Host, KernelState, RuntimeError};
pub use syntax::{cell_code_hash, normalize_code, parse_cell, CellAst, SyntaxError};
pub use task::{
    build_dag, canonicalize_token, Canonicalizer, DagError, TaskDag, TaskKind, TaskSpec,
};
pub use value::{Data, FnDef, HeapId, StmtRef, Value};
