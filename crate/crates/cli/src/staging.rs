//! Output staging: a run writes into a private directory under `--out` and
//! only moves its files into place once every step has succeeded.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

pub struct Staging {
    out: PathBuf,
    dir: PathBuf,
    published: bool,
}

impl Staging {
    pub fn new(out: &Path) -> io::Result<Self> {
        fs::create_dir_all(out)?;
        let dir = out.join(format!(".staging-{}", std::process::id()));
        if dir.exists() {
            fs::remove_dir_all(&dir)?;
        }
        fs::create_dir(&dir)?;
        Ok(Staging {
            out: out.to_path_buf(),
            dir,
            published: false,
        })
    }

    pub fn path(&self) -> &Path {
        &self.dir
    }

    /// Moves every staged entry into the output directory. Files replace
    /// their predecessors by rename; a directory is swapped in whole.
    pub fn publish(mut self) -> io::Result<Vec<PathBuf>> {
        let mut names: Vec<_> = fs::read_dir(&self.dir)?.map(|e| e.map(|e| e.file_name())).collect::<io::Result<_>>()?;
        names.sort();
        let mut moved = Vec::with_capacity(names.len());
        for name in names {
            let src = self.dir.join(&name);
            let dst = self.out.join(&name);
            if src.is_dir() && dst.exists() {
                let old = self.out.join(format!(".replaced-{}-{}", std::process::id(), name.to_string_lossy()));
                fs::rename(&dst, &old)?;
                fs::rename(&src, &dst)?;
                fs::remove_dir_all(&old)?;
            } else {
                fs::rename(&src, &dst)?;
            }
            moved.push(dst);
        }
        fs::remove_dir(&self.dir)?;
        self.published = true;
        Ok(moved)
    }
}

impl Drop for Staging {
    fn drop(&mut self) {
        if !self.published {
            let _ = fs::remove_dir_all(&self.dir);
        }
    }
}
