//! All-or-nothing output files.
//!
//! Outputs are first written to temporary files beside their targets and only
//! renamed into place once every one of them has been written, so a failing
//! command leaves nothing behind.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use tempfile::NamedTempFile;

#[derive(Default)]
pub struct Staged {
    files: Vec<(NamedTempFile, PathBuf)>,
    /// Directories this batch created; removed again if the commit fails.
    created_dirs: Vec<PathBuf>,
    committed: bool,
}

impl Staged {
    pub fn new() -> Self {
        Self::default()
    }

    /// Creates `dir` (and missing parents) for outputs of this batch.
    pub fn ensure_dir(&mut self, dir: &Path) -> std::io::Result<()> {
        let mut missing = Vec::new();
        let mut cur = Some(dir);
        while let Some(d) = cur {
            if d.as_os_str().is_empty() || d.exists() {
                break;
            }
            missing.push(d.to_path_buf());
            cur = d.parent();
        }
        fs::create_dir_all(dir)?;
        missing.reverse();
        self.created_dirs.extend(missing);
        Ok(())
    }

    pub fn add(&mut self, path: impl AsRef<Path>, bytes: &[u8]) -> std::io::Result<()> {
        let path = path.as_ref();
        let parent = match path.parent() {
            Some(p) if !p.as_os_str().is_empty() => p,
            _ => Path::new("."),
        };
        let mut tmp = NamedTempFile::new_in(parent)?;
        tmp.write_all(bytes)?;
        tmp.flush()?;
        self.files.push((tmp, path.to_path_buf()));
        Ok(())
    }

    /// Renames every staged file into place. On failure, files already moved
    /// and directories created by this batch are removed.
    pub fn commit(mut self) -> std::io::Result<()> {
        let mut done: Vec<PathBuf> = Vec::new();
        for (tmp, path) in std::mem::take(&mut self.files) {
            if let Err(e) = tmp.persist(&path) {
                for p in &done {
                    let _ = fs::remove_file(p);
                }
                return Err(e.error);
            }
            done.push(path);
        }
        self.committed = true;
        Ok(())
    }

    fn remove_created_dirs(&self) {
        // deepest first; non-empty directories are left alone
        for d in self.created_dirs.iter().rev() {
            let _ = fs::remove_dir(d);
        }
    }
}

impl Drop for Staged {
    fn drop(&mut self) {
        // uncommitted temps delete themselves; only directories need help
        if !self.committed {
            self.files.clear();
            self.remove_created_dirs();
        }
    }
}
