//! The notebook file: `{"version":1,"cells":[{"id":..,"code":..}]}`.

use std::collections::BTreeSet;
use std::path::Path;

use rewind_core::{parse_cell, CellAst, SyntaxError};
use serde::{Deserialize, Serialize};

pub const NOTEBOOK_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Cell {
    pub id: String,
    pub code: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Notebook {
    pub version: u32,
    pub cells: Vec<Cell>,
}

#[derive(Debug, thiserror::Error)]
pub enum NotebookError {
    #[error("malformed notebook: {0}")]
    Format(#[from] serde_json::Error),
    #[error("unsupported notebook version {0}")]
    Version(u32),
    #[error("invalid notebook: {0}")]
    Invalid(String),
    #[error("cell {cell}: syntax error at {err}")]
    Syntax { cell: String, err: SyntaxError },
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl Notebook {
    pub fn new(cells: Vec<Cell>) -> Self {
        Self { version: NOTEBOOK_VERSION, cells }
    }

    pub fn load(path: &Path) -> Result<Self, NotebookError> {
        let bytes = std::fs::read(path).map_err(|source| NotebookError::Io { path: path.display().to_string(), source })?;
        parse_notebook(&bytes)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("notebook serializes")
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.cells.iter().position(|c| c.id == id)
    }

    /// Parse every cell, failing on the first syntax error.
    pub fn parse_cells(&self) -> Result<Vec<CellAst>, NotebookError> {
        self.cells
            .iter()
            .map(|c| parse_cell(&c.code).map_err(|err| NotebookError::Syntax { cell: c.id.clone(), err }))
            .collect()
    }
}

pub fn parse_notebook(bytes: &[u8]) -> Result<Notebook, NotebookError> {
    let nb: Notebook = serde_json::from_slice(bytes)?;
    if nb.version != NOTEBOOK_VERSION {
        return Err(NotebookError::Version(nb.version));
    }
    let mut seen = BTreeSet::new();
    for (i, c) in nb.cells.iter().enumerate() {
        if c.id.is_empty() {
            return Err(NotebookError::Invalid(format!("cells[{i}].id is empty")));
        }
        if !c.id.chars().all(|ch| ch.is_ascii_alphanumeric() || ch == '-' || ch == '_') {
            return Err(NotebookError::Invalid(format!("cells[{i}].id {:?} may only contain letters, digits, `-` and `_`", c.id)));
        }
        if !seen.insert(c.id.as_str()) {
            return Err(NotebookError::Invalid(format!("duplicate cell id {:?}", c.id)));
        }
    }
    Ok(nb)
}
