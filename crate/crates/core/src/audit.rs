//! Append-only audit trail of authentication decisions.
//!
//! One line per decision: `ts=<unix> user=<id> session=<id> outcome=<name>`.
//! Values outside `[A-Za-z0-9._@-]` are percent-escaped so a line always
//! splits cleanly on spaces.

use std::fs::{File, OpenOptions};
use std::io::{self, Write};
use std::path::Path;
use std::sync::Mutex;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AuditEntry {
    pub timestamp: u64,
    pub user_id: String,
    pub session_id: String,
    pub outcome: String,
}

impl AuditEntry {
    pub fn to_line(&self) -> String {
        format!(
            "ts={} user={} session={} outcome={}",
            self.timestamp,
            escape(&self.user_id),
            escape(&self.session_id),
            escape(&self.outcome)
        )
    }
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for b in s.bytes() {
        if b.is_ascii_alphanumeric() || matches!(b, b'.' | b'_' | b'-' | b'@') {
            out.push(b as char);
        } else {
            out.push_str(&format!("%{b:02X}"));
        }
    }
    if out.is_empty() {
        out.push('-');
    }
    out
}

pub trait AuditSink: Send + Sync {
    fn record(&self, entry: &AuditEntry) -> io::Result<()>;
}

pub struct FileAuditLog {
    file: Mutex<File>,
}

impl FileAuditLog {
    pub fn open(path: impl AsRef<Path>) -> io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self { file: Mutex::new(file) })
    }
}

impl AuditSink for FileAuditLog {
    fn record(&self, entry: &AuditEntry) -> io::Result<()> {
        let mut line = entry.to_line();
        line.push('\n');
        let mut file = self.file.lock().unwrap();
        file.write_all(line.as_bytes())?;
        file.flush()
    }
}

#[derive(Default)]
pub struct MemoryAuditLog {
    lines: Mutex<Vec<String>>,
}

impl MemoryAuditLog {
    pub fn lines(&self) -> Vec<String> {
        self.lines.lock().unwrap().clone()
    }
}

impl AuditSink for MemoryAuditLog {
    fn record(&self, entry: &AuditEntry) -> io::Result<()> {
        self.lines.lock().unwrap().push(entry.to_line());
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_shape_and_escaping() {
        let e = AuditEntry {
            timestamp: 42,
            user_id: "alice".into(),
            session_id: "a b|c".into(),
            outcome: "Accepted".into(),
        };
        assert_eq!(e.to_line(), "ts=42 user=alice session=a%20b%7Cc outcome=Accepted");
        let empty = AuditEntry { session_id: String::new(), ..e };
        assert!(empty.to_line().contains("session=- "));
    }

    #[test]
    fn file_log_appends() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("audit.log");
        let log = FileAuditLog::open(&path).unwrap();
        for ts in 0..3 {
            log.record(&AuditEntry {
                timestamp: ts,
                user_id: "u".into(),
                session_id: "s".into(),
                outcome: "RejectedMatch".into(),
            })
            .unwrap();
        }
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.lines().all(|l| l.ends_with("outcome=RejectedMatch")));
    }
}
