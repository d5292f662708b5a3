//! Content-addressed blob storage: `<root>/<hh>/<remaining hex>`.

use std::fs::{self, File};
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use rewind_core::digest::Sha256Stream;
use rewind_core::{sha256, Digest};

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("blob store I/O error at {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("blob {0} is missing")]
    Missing(Digest),
    #[error("blob {expected} is corrupt (contents hash to {actual})")]
    Corrupt { expected: Digest, actual: Digest },
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone)]
pub struct BlobStore {
    root: PathBuf,
}

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

impl BlobStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(io_err(&root))?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path_of(&self, d: &Digest) -> PathBuf {
        let hex = d.to_hex();
        self.root.join(&hex[..2]).join(&hex[2..])
    }

    pub fn contains(&self, d: &Digest) -> bool {
        self.path_of(d).is_file()
    }

    /// Store `bytes` under their SHA-256. Writes only when absent, through a
    /// temporary file and a rename so that concurrent writers of the same
    /// content never expose a partial blob.
    pub fn put(&self, bytes: &[u8]) -> Result<Digest, StoreError> {
        let d = sha256(bytes);
        let path = self.path_of(&d);
        if path.is_file() {
            return Ok(d);
        }
        let dir = path.parent().expect("blob path has a parent");
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let tmp = dir.join(format!(
            ".tmp-{}-{}",
            std::process::id(),
            TMP_COUNTER.fetch_add(1, Ordering::Relaxed)
        ));
        let write = || -> io::Result<()> {
            let mut f = File::create(&tmp)?;
            f.write_all(bytes)?;
            f.sync_all()?;
            fs::rename(&tmp, &path)
        };
        if let Err(e) = write() {
            let _ = fs::remove_file(&tmp);
            return Err(StoreError::Io { path, source: e });
        }
        Ok(d)
    }

    /// Copy a file into the store, hashing it on the way.
    pub fn put_file(&self, src: &Path) -> Result<Digest, StoreError> {
        let bytes = fs::read(src).map_err(io_err(src))?;
        self.put(&bytes)
    }

    /// Read a blob and check its hash.
    pub fn get(&self, d: &Digest) -> Result<Vec<u8>, StoreError> {
        let path = self.path_of(d);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Err(StoreError::Missing(*d)),
            Err(e) => return Err(StoreError::Io { path, source: e }),
        };
        let actual = sha256(&bytes);
        if actual != *d {
            return Err(StoreError::Corrupt { expected: *d, actual });
        }
        Ok(bytes)
    }

    pub fn size_of(&self, d: &Digest) -> Option<u64> {
        fs::metadata(self.path_of(d)).ok().map(|m| m.len())
    }

    /// Every blob in the store, sorted. Stray files that are not named like
    /// blobs are ignored.
    pub fn list(&self) -> Result<Vec<Digest>, StoreError> {
        let mut out = Vec::new();
        let rd = match fs::read_dir(&self.root) {
            Ok(rd) => rd,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(out),
            Err(e) => return Err(StoreError::Io { path: self.root.clone(), source: e }),
        };
        for shard in rd {
            let shard = shard.map_err(io_err(&self.root))?;
            let prefix = shard.file_name().to_string_lossy().into_owned();
            if prefix.len() != 2 || !shard.path().is_dir() {
                continue;
            }
            for entry in fs::read_dir(shard.path()).map_err(io_err(&shard.path()))? {
                let entry = entry.map_err(io_err(&shard.path()))?;
                let name = entry.file_name().to_string_lossy().into_owned();
                if let Some(d) = Digest::from_hex(&format!("{prefix}{name}")) {
                    out.push(d);
                }
            }
        }
        out.sort();
        Ok(out)
    }

    pub fn remove(&self, d: &Digest) -> Result<(), StoreError> {
        let path = self.path_of(d);
        match fs::remove_file(&path) {
            Ok(()) => Ok(()),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(()),
            Err(e) => Err(StoreError::Io { path, source: e }),
        }
    }

    /// Total bytes stored.
    pub fn total_bytes(&self) -> Result<u64, StoreError> {
        Ok(self.list()?.iter().filter_map(|d| self.size_of(d)).sum())
    }
}

/// Streaming SHA-256 of a file.
pub fn hash_file(path: &Path) -> Result<Digest, StoreError> {
    let mut f = File::open(path).map_err(io_err(path))?;
    let mut h = Sha256Stream::new();
    let mut buf = vec![0u8; 64 * 1024];
    loop {
        let n = f.read(&mut buf).map_err(io_err(path))?;
        if n == 0 {
            return Ok(h.finish());
        }
        h.update(&buf[..n]);
    }
}
