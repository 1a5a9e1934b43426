//! Removes half-written outputs when a subcommand fails.

use std::path::{Path, PathBuf};

use crate::Failure;

/// Tracks outputs of the running subcommand. Unless [`commit`](Self::commit)
/// is called, dropping the guard deletes every tracked file and every
/// directory the guard itself created.
#[derive(Default)]
pub struct OutputGuard {
    files: Vec<PathBuf>,
    dirs: Vec<PathBuf>,
    committed: bool,
}

impl OutputGuard {
    pub fn new() -> Self {
        Self::default()
    }

    /// Creates `dir` and its missing parents; only the created ones are
    /// removed on failure.
    pub fn dir(&mut self, dir: &Path) -> Result<(), Failure> {
        let mut missing = Vec::new();
        let mut cur = Some(dir);
        while let Some(d) = cur {
            if d.as_os_str().is_empty() || d.exists() {
                break;
            }
            missing.push(d.to_path_buf());
            cur = d.parent();
        }
        std::fs::create_dir_all(dir).map_err(|e| Failure::io(dir, e))?;
        self.dirs.extend(missing);
        Ok(())
    }

    /// Registers a file about to be written, creating its parent directory.
    pub fn file(&mut self, path: &Path) -> Result<PathBuf, Failure> {
        if let Some(parent) = path.parent() {
            self.dir(parent)?;
        }
        self.files.push(path.to_path_buf());
        Ok(path.to_path_buf())
    }

    pub fn commit(mut self) {
        self.committed = true;
    }
}

impl Drop for OutputGuard {
    fn drop(&mut self) {
        if self.committed {
            return;
        }
        for f in &self.files {
            let _ = std::fs::remove_file(f);
        }
        for d in self.dirs.iter().rev() {
            let _ = std::fs::remove_dir_all(d);
        }
        if !self.files.is_empty() || !self.dirs.is_empty() {
            log::warn!("removed partial outputs");
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uncommitted_outputs_are_removed() {
        let tmp = tempfile::tempdir().unwrap();
        let kept = tmp.path().join("kept.txt");
        std::fs::write(&kept, "x").unwrap();
        let new_dir = tmp.path().join("a/b");
        {
            let mut g = OutputGuard::new();
            let f = g.file(&new_dir.join("out.csv")).unwrap();
            std::fs::write(&f, "partial").unwrap();
            let g2 = g.file(&tmp.path().join("top.csv")).unwrap();
            std::fs::write(g2, "partial").unwrap();
        }
        assert!(!tmp.path().join("a").exists());
        assert!(!tmp.path().join("top.csv").exists());
        assert!(kept.exists() && tmp.path().exists());
    }

    #[test]
    fn committed_outputs_stay() {
        let tmp = tempfile::tempdir().unwrap();
        let mut g = OutputGuard::new();
        let f = g.file(&tmp.path().join("d/out.csv")).unwrap();
        std::fs::write(&f, "done").unwrap();
        g.commit();
        assert_eq!(std::fs::read_to_string(f).unwrap(), "done");
    }
}
