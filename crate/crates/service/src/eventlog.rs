//! Append-only JSON-lines log of conversation events:
//! `{ts, session_id, event, payload}` per line.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use tplrag_core::ConversationEvent;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub ts: u64,
    pub session_id: String,
    #[serde(flatten)]
    pub event: ConversationEvent,
}

pub struct EventLog {
    path: PathBuf,
    file: Mutex<File>,
}

impl EventLog {
    pub fn open(path: &Path) -> std::io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(EventLog {
            path: path.to_path_buf(),
            file: Mutex::new(file),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Append records as one write and flush them to the OS.
    pub fn append(&self, records: &[LogRecord]) -> std::io::Result<()> {
        let mut buf = Vec::new();
        for r in records {
            serde_json::to_writer(&mut buf, r)?;
            buf.push(b'\n');
        }
        let mut f = self.file.lock().unwrap_or_else(|p| p.into_inner());
        f.write_all(&buf)?;
        f.flush()
    }
}

/// Read a log, grouping records per session in first-seen order. A
/// malformed line (for example a write cut short by a crash) is skipped.
pub fn read_log(path: &Path) -> std::io::Result<Vec<(String, Vec<ConversationEvent>)>> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(vec![]),
        Err(e) => return Err(e),
    };
    let mut order: Vec<(String, Vec<ConversationEvent>)> = Vec::new();
    let mut pos: HashMap<String, usize> = HashMap::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: LogRecord = match serde_json::from_str(&line) {
            Ok(r) => r,
            Err(e) => {
                tracing::warn!(line = n + 1, error = %e, "skipping unreadable event log line");
                continue;
            }
        };
        let i = *pos.entry(rec.session_id.clone()).or_insert_with(|| {
            order.push((rec.session_id.clone(), vec![]));
            order.len() - 1
        });
        order[i].1.push(rec.event);
    }
    Ok(order)
}
