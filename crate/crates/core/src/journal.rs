//! Line-oriented append-only file shared by several processes.
//!
//! Mutations run under an exclusive advisory lock: replay whatever other
//! writers appended, decide, append, unlock. A torn final line (no trailing
//! newline) is left unapplied.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Read, Seek, SeekFrom, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub(crate) struct Journal {
    file: File,
    applied: u64,
    lines_seen: usize,
}

impl Journal {
    pub fn open(path: &Path) -> Result<Self> {
        let file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(path)?;
        Ok(Self {
            file,
            applied: 0,
            lines_seen: 0,
        })
    }

    /// Feeds every complete, not yet applied line to `apply`.
    pub fn replay(&mut self, mut apply: impl FnMut(&str) -> Result<()>) -> Result<()> {
        self.file.seek(SeekFrom::Start(self.applied))?;
        let mut reader = BufReader::new((&self.file).take(u64::MAX));
        let mut line = String::new();
        loop {
            line.clear();
            let read = reader.read_line(&mut line)?;
            if read == 0 || !line.ends_with('\n') {
                break;
            }
            self.lines_seen += 1;
            let text = line.trim_end_matches('\n');
            if !text.is_empty() {
                let line_no = self.lines_seen;
                apply(text).map_err(|e| match e {
                    Error::Parse { message, .. } => Error::Parse { line: line_no, message },
                    other => other,
                })?;
            }
            self.applied += read as u64;
        }
        Ok(())
    }

    pub fn append(&mut self, lines: &[String]) -> Result<()> {
        if lines.is_empty() {
            return Ok(());
        }
        // Drop a torn tail so the new lines start on a clean boundary. Callers
        // hold the exclusive lock and have replayed everything complete.
        if self.file.metadata()?.len() > self.applied {
            self.file.set_len(self.applied)?;
        }
        let mut buf = String::new();
        for l in lines {
            buf.push_str(l);
            buf.push('\n');
        }
        self.file.write_all(buf.as_bytes())?;
        self.file.sync_data()?;
        self.applied += buf.len() as u64;
        self.lines_seen += lines.len();
        Ok(())
    }

    /// Runs `f` holding the exclusive file lock.
    pub fn exclusive<T>(&mut self, f: impl FnOnce(&mut Self) -> Result<T>) -> Result<T> {
        self.file.lock()?;
        let out = f(self);
        self.file.unlock()?;
        out
    }

    pub fn shared<T>(&mut self, f: impl FnOnce(&mut Self) -> Result<T>) -> Result<T> {
        self.file.lock_shared()?;
        let out = f(self);
        self.file.unlock()?;
        out
    }
}
