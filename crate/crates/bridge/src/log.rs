//! Append-only per-session audit log and replay.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::engine::{LogEvent, SessionEngine};
use crate::error::BridgeError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditLogEntry {
    pub seq: u64,
    pub session_id: String,
    #[serde(flatten)]
    pub event: LogEvent,
    pub timestamp: String,
}

#[derive(Debug)]
pub struct AuditLog {
    session_id: String,
    entries: Vec<AuditLogEntry>,
    file: Option<File>,
}

impl AuditLog {
    pub fn in_memory(session_id: impl Into<String>) -> Self {
        AuditLog {
            session_id: session_id.into(),
            entries: Vec::new(),
            file: None,
        }
    }

    /// Log mirrored to `<dir>/<session id>.jsonl`, which must not exist yet.
    pub fn create(session_id: impl Into<String>, dir: &Path) -> Result<Self, BridgeError> {
        let session_id = session_id.into();
        let file = OpenOptions::new()
            .create_new(true)
            .append(true)
            .open(log_path(dir, &session_id))?;
        Ok(AuditLog {
            session_id,
            entries: Vec::new(),
            file: Some(file),
        })
    }

    /// Reopens an existing log file for appending.
    pub fn reopen(path: &Path) -> Result<Self, BridgeError> {
        let entries = read_entries(path)?;
        let session_id = entries
            .first()
            .map(|e| e.session_id.clone())
            .ok_or_else(|| BridgeError::Replay(format!("{} is empty", path.display())))?;
        let file = OpenOptions::new().append(true).open(path)?;
        Ok(AuditLog {
            session_id,
            entries,
            file: Some(file),
        })
    }

    pub fn session_id(&self) -> &str {
        &self.session_id
    }

    pub fn entries(&self) -> &[AuditLogEntry] {
        &self.entries
    }

    pub fn last_seq(&self) -> u64 {
        self.entries.last().map_or(0, |e| e.seq)
    }

    /// Entries with `seq >= from`.
    pub fn since(&self, from: u64) -> &[AuditLogEntry] {
        let start = from.saturating_sub(1).min(self.entries.len() as u64) as usize;
        &self.entries[start..]
    }

    /// Appends with the next sequence number; the file is written first so
    /// an entry never exists in memory without being persisted.
    pub fn append(&mut self, event: LogEvent, timestamp: &str) -> Result<&AuditLogEntry, BridgeError> {
        let entry = AuditLogEntry {
            seq: self.last_seq() + 1,
            session_id: self.session_id.clone(),
            event,
            timestamp: timestamp.to_owned(),
        };
        if let Some(file) = self.file.as_mut() {
            let mut line = serde_json::to_vec(&entry)?;
            line.push(b'\n');
            file.write_all(&line)?;
            file.flush()?;
        }
        self.entries.push(entry);
        Ok(self.entries.last().expect("just pushed"))
    }
}

pub fn log_path(dir: &Path, session_id: &str) -> PathBuf {
    dir.join(format!("{session_id}.jsonl"))
}

pub fn read_entries(path: &Path) -> Result<Vec<AuditLogEntry>, BridgeError> {
    let mut entries = Vec::new();
    for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: AuditLogEntry = serde_json::from_str(&line)
            .map_err(|e| BridgeError::Replay(format!("{} line {}: {e}", path.display(), i + 1)))?;
        entries.push(entry);
    }
    Ok(entries)
}

/// Compares events as they appear on disk; hidden seed ids never do.
fn same_wire_form(a: &LogEvent, b: &LogEvent) -> Result<bool, BridgeError> {
    Ok(serde_json::to_value(a)? == serde_json::to_value(b)?)
}

/// Rebuilds a session by re-applying every logged decision with its logged
/// timestamp, and checks that the engine emits exactly the logged events.
pub fn replay(entries: &[AuditLogEntry]) -> Result<SessionEngine, BridgeError> {
    let mismatch = |m: String| Err(BridgeError::Replay(m));
    let first = match entries.first() {
        Some(e) => e,
        None => return mismatch("empty log".into()),
    };
    for (i, e) in entries.iter().enumerate() {
        if e.seq != i as u64 + 1 {
            return mismatch(format!("entry {} carries sequence number {}", i + 1, e.seq));
        }
        if e.session_id != first.session_id {
            return mismatch(format!("entry {} belongs to session {}", e.seq, e.session_id));
        }
    }
    let LogEvent::SessionCreated { config, .. } = &first.event else {
        return mismatch("first entry is not session_created".into());
    };
    let (mut engine, created) = SessionEngine::new(first.session_id.clone(), config.clone(), &first.timestamp)?;
    if !same_wire_form(&created, &first.event)? {
        return mismatch("session_created does not match the configuration".into());
    }

    let mut i = 1;
    while i < entries.len() {
        let entry = &entries[i];
        let LogEvent::Decision(d) = &entry.event else {
            return mismatch(format!("entry {} ({}) is not preceded by a decision", entry.seq, entry.event.kind()));
        };
        engine.check(d)?;
        let produced = engine.apply(d, &entry.timestamp);
        let logged: Vec<&LogEvent> = entries[i + 1..].iter().take(produced.len()).map(|e| &e.event).collect();
        let mut same = logged.len() == produced.len();
        for (a, b) in logged.iter().zip(&produced) {
            same = same && same_wire_form(a, b)?;
        }
        if !same {
            return mismatch(format!("events after decision {} differ from the log", entry.seq));
        }
        i += 1 + produced.len();
    }
    Ok(engine)
}
