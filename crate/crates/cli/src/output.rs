use std::fs;
use std::path::{Path, PathBuf};

use pathroute::{Error, Result};

/// Output directory that refuses to clobber existing content without `force`.
pub struct OutDir {
    root: PathBuf,
}

impl OutDir {
    pub fn create(root: &Path, force: bool) -> Result<Self> {
        if root.exists() {
            let occupied = fs::read_dir(root)
                .map_err(|e| Error::Io {
                    path: root.into(),
                    source: e,
                })?
                .next()
                .is_some();
            if occupied && !force {
                return Err(Error::Usage(format!(
                    "{} is not empty; pass --force to overwrite",
                    root.display()
                )));
            }
        }
        fs::create_dir_all(root).map_err(|e| Error::Io {
            path: root.into(),
            source: e,
        })?;
        Ok(OutDir { root: root.into() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn subdir(&self, name: &str) -> Result<PathBuf> {
        let p = self.root.join(name);
        fs::create_dir_all(&p).map_err(|e| Error::Io {
            path: p.clone(),
            source: e,
        })?;
        Ok(p)
    }

    pub fn write(&self, name: &str, contents: impl AsRef<[u8]>) -> Result<PathBuf> {
        let p = self.path(name);
        fs::write(&p, contents).map_err(|e| Error::Io {
            path: p.clone(),
            source: e,
        })?;
        Ok(p)
    }
}

/// Appends lines to a CSV file, flushing each one.
pub struct CsvLog {
    path: PathBuf,
    file: fs::File,
}

impl CsvLog {
    pub fn create(path: PathBuf, header: &str) -> Result<Self> {
        use std::io::Write;
        let mut file = fs::File::create(&path).map_err(|e| Error::Io {
            path: path.clone(),
            source: e,
        })?;
        writeln!(file, "{header}").map_err(|e| Error::Io {
            path: path.clone(),
            source: e,
        })?;
        Ok(CsvLog { path, file })
    }

    pub fn line(&mut self, line: &str) -> Result<()> {
        use std::io::Write;
        writeln!(self.file, "{line}")
            .and_then(|_| self.file.flush())
            .map_err(|e| Error::Io {
                path: self.path.clone(),
                source: e,
            })
    }
}
