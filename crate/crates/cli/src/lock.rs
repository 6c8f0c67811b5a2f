//! Output-directory lockfile so concurrent runs cannot interleave writes.

use std::path::{Path, PathBuf};

use crate::error::{CliError, Result};

pub struct DirLock {
    path: PathBuf,
}

impl DirLock {
    /// Create `<dir>/.meshfield.lock` exclusively; an existing lock means
    /// another run owns the directory.
    pub fn acquire(dir: &Path) -> Result<DirLock> {
        std::fs::create_dir_all(dir).map_err(CliError::io(dir))?;
        let path = dir.join(".meshfield.lock");
        match std::fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(DirLock { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                Err(CliError::Locked(dir.to_path_buf()))
            }
            Err(e) => Err(CliError::Io { path, source: e }),
        }
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}
