//! Append-only JSON Lines event log.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::RuntimeError;
use crate::provider::CacheKey;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Prompt,
    Response,
    Parsed,
    World,
    Detector,
    Checkpoint,
    Rng,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub run_id: String,
    pub seq: u64,
    pub round: u64,
    pub stage: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agent_id: Option<String>,
    pub kind: EventKind,
    pub payload: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_digest: Option<CacheKey>,
}

/// How much of each prompt is written to the log.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JournalDetail {
    /// Full message lists.
    #[default]
    Full,
    /// Digest and length only; keeps long runs small.
    Digest,
}

/// Position in a log: records written and bytes written.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct JournalCursor {
    pub records: u64,
    pub bytes: u64,
}

enum Sink {
    File { path: PathBuf, out: BufWriter<File> },
    Memory(Vec<String>),
}

pub struct Journal {
    run_id: String,
    sink: Sink,
    cursor: JournalCursor,
    last_round: u64,
    pub detail: JournalDetail,
}

impl Journal {
    /// Creates (truncating) `path`.
    pub fn create(path: &Path, run_id: &str) -> Result<Self, RuntimeError> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| RuntimeError::io(parent, e))?;
        }
        let file = File::create(path).map_err(|e| RuntimeError::io(path, e))?;
        Ok(Self {
            run_id: run_id.to_string(),
            sink: Sink::File {
                path: path.to_path_buf(),
                out: BufWriter::new(file),
            },
            cursor: JournalCursor::default(),
            last_round: 0,
            detail: JournalDetail::Full,
        })
    }

    /// Continues a log at `cursor`: `path` is created from the first
    /// `cursor.bytes` bytes of `source` (which may be the same file).
    pub fn resume(path: &Path, source: &Path, run_id: &str, cursor: JournalCursor) -> Result<Self, RuntimeError> {
        let prefix = {
            let bytes = std::fs::read(source).map_err(|e| RuntimeError::io(source, e))?;
            if (bytes.len() as u64) < cursor.bytes {
                return Err(RuntimeError::Checkpoint(format!(
                    "log {} is shorter than the checkpoint cursor",
                    source.display()
                )));
            }
            bytes[..cursor.bytes as usize].to_vec()
        };
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| RuntimeError::io(parent, e))?;
        }
        std::fs::write(path, &prefix).map_err(|e| RuntimeError::io(path, e))?;
        let file = OpenOptions::new()
            .append(true)
            .open(path)
            .map_err(|e| RuntimeError::io(path, e))?;
        let last_round = read_events(path)?.last().map(|e| e.round).unwrap_or(0);
        Ok(Self {
            run_id: run_id.to_string(),
            sink: Sink::File {
                path: path.to_path_buf(),
                out: BufWriter::new(file),
            },
            cursor,
            last_round,
            detail: JournalDetail::Full,
        })
    }

    pub fn in_memory(run_id: &str) -> Self {
        Self {
            run_id: run_id.to_string(),
            sink: Sink::Memory(Vec::new()),
            cursor: JournalCursor::default(),
            last_round: 0,
            detail: JournalDetail::Full,
        }
    }

    pub fn run_id(&self) -> &str {
        &self.run_id
    }

    pub fn cursor(&self) -> JournalCursor {
        self.cursor
    }

    pub fn path(&self) -> Option<&Path> {
        match &self.sink {
            Sink::File { path, .. } => Some(path),
            Sink::Memory(_) => None,
        }
    }

    /// Lines held by an in-memory journal.
    pub fn memory_lines(&self) -> &[String] {
        match &self.sink {
            Sink::Memory(lines) => lines,
            Sink::File { .. } => &[],
        }
    }

    /// Appends one record and returns its sequence number. Round numbers
    /// must not decrease.
    pub fn record(
        &mut self,
        round: u64,
        stage: &str,
        agent_id: Option<&str>,
        kind: EventKind,
        payload: Value,
        prompt_digest: Option<CacheKey>,
    ) -> Result<u64, RuntimeError> {
        if round < self.last_round {
            return Err(RuntimeError::Journal(format!(
                "round {round} recorded after round {}",
                self.last_round
            )));
        }
        self.last_round = round;
        let seq = self.cursor.records;
        let record = EventRecord {
            run_id: self.run_id.clone(),
            seq,
            round,
            stage: stage.to_string(),
            agent_id: agent_id.map(str::to_string),
            kind,
            payload,
            prompt_digest,
        };
        let mut line = serde_json::to_string(&record).map_err(|e| RuntimeError::Journal(e.to_string()))?;
        line.push('\n');
        match &mut self.sink {
            Sink::File { path, out } => out.write_all(line.as_bytes()).map_err(|e| RuntimeError::io(path, e))?,
            Sink::Memory(lines) => lines.push(line.trim_end().to_string()),
        }
        self.cursor.records += 1;
        self.cursor.bytes += line.len() as u64;
        Ok(seq)
    }

    pub fn flush(&mut self) -> Result<(), RuntimeError> {
        if let Sink::File { path, out } = &mut self.sink {
            out.flush().map_err(|e| RuntimeError::io(path, e))?;
        }
        Ok(())
    }
}

impl Drop for Journal {
    fn drop(&mut self) {
        let _ = self.flush();
    }
}

/// Reads every record from a log file.
pub fn read_events(path: &Path) -> Result<Vec<EventRecord>, RuntimeError> {
    let file = File::open(path).map_err(|e| RuntimeError::io(path, e))?;
    let mut events = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| RuntimeError::io(path, e))?;
        if line.is_empty() {
            continue;
        }
        let event: EventRecord = serde_json::from_str(&line)
            .map_err(|e| RuntimeError::Journal(format!("{}:{}: {e}", path.display(), i + 1)))?;
        events.push(event);
    }
    Ok(events)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn cursor_tracks_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.jsonl");
        let mut j = Journal::create(&path, "r").unwrap();
        j.record(0, "init", None, EventKind::World, json!({"a": 1}), None)
            .unwrap();
        j.record(1, "s", Some("x"), EventKind::Rng, json!(2), None).unwrap();
        j.flush().unwrap();
        let len = std::fs::metadata(&path).unwrap().len();
        assert_eq!(j.cursor(), JournalCursor { records: 2, bytes: len });
        let events = read_events(&path).unwrap();
        assert_eq!(events[1].agent_id.as_deref(), Some("x"));
        assert_eq!(events[1].seq, 1);
    }

    #[test]
    fn rounds_never_decrease() {
        let mut j = Journal::in_memory("r");
        j.record(2, "s", None, EventKind::World, json!(null), None).unwrap();
        assert!(j.record(1, "s", None, EventKind::World, json!(null), None).is_err());
    }

    #[test]
    fn resume_truncates_to_cursor() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.jsonl");
        let mut j = Journal::create(&path, "r").unwrap();
        j.record(0, "a", None, EventKind::World, json!(0), None).unwrap();
        let cursor = j.cursor();
        j.record(1, "b", None, EventKind::World, json!(1), None).unwrap();
        j.flush().unwrap();
        drop(j);
        let mut k = Journal::resume(&path, &path, "r", cursor).unwrap();
        k.record(1, "c", None, EventKind::World, json!(2), None).unwrap();
        k.flush().unwrap();
        let events = read_events(&path).unwrap();
        assert_eq!(events.len(), 2);
        assert_eq!(events[1].stage, "c");
        assert_eq!(events[1].seq, 1);
    }
}
