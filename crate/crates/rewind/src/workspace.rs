//! The shared working directory that notebooks and tasks read and write.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rewind_core::task::validate_path;

#[derive(Debug, Clone)]
pub struct Workspace {
    root: PathBuf,
}

impl Workspace {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Absolute location of a workspace-relative path.
    pub fn resolve(&self, rel: &str) -> Result<PathBuf, String> {
        validate_path(rel).map_err(|e| e.to_string())?;
        Ok(self.root.join(rel))
    }

    pub fn read_text(&self, rel: &str) -> Result<String, String> {
        let p = self.resolve(rel)?;
        fs::read_to_string(&p).map_err(|e| format!("cannot read {rel}: {e}"))
    }

    pub fn write(&self, rel: &str, bytes: &[u8]) -> Result<PathBuf, String> {
        let p = self.resolve(rel)?;
        write_creating_dirs(&p, bytes).map_err(|e| format!("cannot write {rel}: {e}"))?;
        Ok(p)
    }
}

pub(crate) fn write_creating_dirs(path: &Path, bytes: &[u8]) -> io::Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, bytes)
}

pub(crate) fn copy_creating_dirs(src: &Path, dst: &Path) -> io::Result<()> {
    if let Some(dir) = dst.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::copy(src, dst).map(|_| ())
}
