//! The cell language: tokens, AST, parser and source normalization.

mod ast;
mod lexer;
mod parser;

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

pub use ast::{BinOp, CellAst, Expr, Ident, NameClass, Pos, Span, Statement, StmtKind};
pub use parser::{parse_cell, parse_fn_def};

use crate::digest::{sha256, Digest};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntaxError {
    pub pos: Pos,
    pub message: String,
}

impl SyntaxError {
    pub(crate) fn new(pos: Pos, message: impl Into<String>) -> Self {
        Self { pos, message: message.into() }
    }
}

impl fmt::Display for SyntaxError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.pos.line, self.pos.col, self.message)
    }
}

impl core::error::Error for SyntaxError {}

/// Right-trim every line, join with `\n`, and drop trailing blank lines.
pub fn normalize_code(code: &str) -> String {
    let mut lines: Vec<&str> = code.lines().map(str::trim_end).collect();
    while lines.last().is_some_and(|l| l.is_empty()) {
        lines.pop();
    }
    lines.join("\n")
}

/// Comparison key for detecting edited cells.
pub fn cell_code_hash(code: &str) -> Digest {
    sha256(normalize_code(code).as_bytes())
}
