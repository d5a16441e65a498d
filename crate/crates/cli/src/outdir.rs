//! The output directory: an advisory lock for the duration of a run, and
//! atomic artifact writes (temp file in the same directory, then rename).

use std::fs::{File, OpenOptions};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::CliError;

pub const LOCK_FILE: &str = ".minerlink.lock";

pub struct OutputDir {
    root: PathBuf,
    lock: PathBuf,
}

impl OutputDir {
    /// Create the directory if needed and take the lock. A lock left behind
    /// by a crashed run has to be removed by hand.
    pub fn lock(root: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(root).map_err(|e| CliError::Config(format!("cannot create output dir {}: {e}", root.display())))?;
        let lock = root.join(LOCK_FILE);
        let mut f = OpenOptions::new().write(true).create_new(true).open(&lock).map_err(|e| {
            if e.kind() == std::io::ErrorKind::AlreadyExists {
                CliError::Config(format!("{} is locked by another run (delete {} if that run is gone)", root.display(), lock.display()))
            } else {
                CliError::Config(format!("cannot lock {}: {e}", root.display()))
            }
        })?;
        let _ = writeln!(f, "{}", std::process::id());
        Ok(Self { root: root.to_owned(), lock })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    /// Write `name` through `fill`; the file appears only if `fill` succeeds.
    pub fn write<F>(&self, name: &str, fill: F) -> Result<PathBuf, CliError>
    where
        F: FnOnce(&mut BufWriter<&mut tempfile::NamedTempFile>) -> Result<(), CliError>,
    {
        let target = self.path(name);
        let io = |e: std::io::Error| CliError::io(&target, e);
        let mut tmp = tempfile::Builder::new().prefix(".tmp-").tempfile_in(&self.root).map_err(io)?;
        {
            let mut w = BufWriter::new(&mut tmp);
            fill(&mut w)?;
            w.flush().map_err(io)?;
        }
        tmp.as_file().sync_all().map_err(io)?;
        tmp.persist(&target).map_err(|e| io(e.error))?;
        Ok(target)
    }

    pub fn write_json<T: serde::Serialize>(&self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        self.write(name, |w| {
            serde_json::to_writer_pretty(&mut *w, value).map_err(minerlink::Error::from)?;
            w.write_all(b"\n").map_err(|e| CliError::io(name, e))
        })
    }
}

impl Drop for OutputDir {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.lock);
    }
}

/// Open an input artifact, naming the step that produces it when missing.
pub fn open_input(path: &Path, produced_by: &str) -> Result<BufReader<File>, CliError> {
    File::open(path).map(BufReader::new).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            CliError::MissingInput { path: path.to_owned(), produced_by: produced_by.to_owned() }
        } else {
            CliError::io(path, e)
        }
    })
}
