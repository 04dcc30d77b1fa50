//! Append-only event log: one canonical JSON document per line, each
//! carrying a SHA-256 checksum of its own sequence number, timestamp and
//! payload.

use std::fs::{File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use dcim_core::canonical::{to_canonical_string, CanonicalError};
use dcim_core::graph::StateUpdate;
use dcim_core::reasoning::Anomaly;
use dcim_core::udcp::UdcpMessage;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "body", rename_all = "snake_case")]
pub enum LogPayload {
    Udcp(UdcpMessage),
    StateBatch(Vec<StateUpdate>),
    Anomaly(Anomaly),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub seq: u64,
    /// Wall-clock milliseconds at append.
    pub ts: i64,
    pub payload: LogPayload,
    pub checksum: String,
}

#[derive(Serialize)]
struct Unsigned<'a> {
    seq: u64,
    ts: i64,
    payload: &'a LogPayload,
}

impl LogEntry {
    pub fn new(seq: u64, ts: i64, payload: LogPayload) -> Result<Self, CanonicalError> {
        let checksum = digest(seq, ts, &payload)?;
        Ok(LogEntry {
            seq,
            ts,
            payload,
            checksum,
        })
    }

    pub fn verify(&self) -> bool {
        digest(self.seq, self.ts, &self.payload).is_ok_and(|d| d == self.checksum)
    }

    pub fn to_line(&self) -> Result<String, CanonicalError> {
        to_canonical_string(self)
    }
}

fn digest(seq: u64, ts: i64, payload: &LogPayload) -> Result<String, CanonicalError> {
    let bytes = to_canonical_string(&Unsigned { seq, ts, payload })?;
    Ok(hex::encode(Sha256::digest(bytes.as_bytes())))
}

#[derive(Debug, thiserror::Error)]
pub enum LogError {
    #[error("event log I/O: {0}")]
    Io(#[from] io::Error),
    #[error(transparent)]
    Encode(#[from] CanonicalError),
    #[error(transparent)]
    Corrupt(#[from] ReplayError),
}

/// Why replay stopped before the end of the log.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("event log line {line}: {reason} (last valid sequence {last_valid})")]
pub struct ReplayError {
    /// 1-based line number of the first bad entry.
    pub line: usize,
    pub last_valid: u64,
    pub reason: String,
}

/// Entries read from a log, up to the first invalid one.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReadOutcome {
    pub entries: Vec<LogEntry>,
    pub error: Option<ReplayError>,
    /// The final line had no terminating newline: an interrupted append.
    pub torn_tail: bool,
    /// Byte length of the valid prefix.
    pub valid_bytes: u64,
}

/// Read and verify every entry of `text`. Stops at the first entry that
/// fails to parse, fails its checksum or breaks sequence order.
pub fn read_entries(text: &str) -> ReadOutcome {
    let mut out = ReadOutcome::default();
    let mut offset = 0u64;
    for (i, raw) in text.split_inclusive('\n').enumerate() {
        if !raw.ends_with('\n') {
            out.torn_tail = true;
            break;
        }
        let line = raw.trim_end_matches('\n');
        let last_valid = out.entries.last().map_or(0, |e| e.seq);
        let fail = |reason: String| ReplayError {
            line: i + 1,
            last_valid,
            reason,
        };
        let entry: LogEntry = match serde_json::from_str(line) {
            Ok(e) => e,
            Err(e) => {
                out.error = Some(fail(format!("unreadable entry: {e}")));
                break;
            }
        };
        if !entry.verify() {
            out.error = Some(fail(format!("checksum mismatch on sequence {}", entry.seq)));
            break;
        }
        if entry.seq <= last_valid {
            out.error = Some(fail(format!(
                "sequence {} does not follow {last_valid}",
                entry.seq
            )));
            break;
        }
        offset += raw.len() as u64;
        out.valid_bytes = offset;
        out.entries.push(entry);
    }
    out
}

/// The log file plus an in-memory copy of every entry, for `since` reads.
#[derive(Debug, Default)]
pub struct EventLog {
    path: Option<PathBuf>,
    entries: Vec<LogEntry>,
}

impl EventLog {
    pub fn in_memory() -> Self {
        EventLog::default()
    }

    /// Open `path` for appending, loading its entries. A torn final line is
    /// cut off; any other damage is an error naming the first bad line.
    pub fn open(path: &Path) -> Result<Self, LogError> {
        // Lossy: an interrupted append may end mid-character.
        let text = match std::fs::read(path) {
            Ok(bytes) => String::from_utf8_lossy(&bytes).into_owned(),
            Err(e) if e.kind() == io::ErrorKind::NotFound => String::new(),
            Err(e) => return Err(e.into()),
        };
        let outcome = read_entries(&text);
        if let Some(err) = outcome.error {
            return Err(err.into());
        }
        if outcome.torn_tail {
            OpenOptions::new()
                .write(true)
                .open(path)?
                .set_len(outcome.valid_bytes)?;
        }
        Ok(EventLog {
            path: Some(path.to_path_buf()),
            entries: outcome.entries,
        })
    }

    pub fn entries(&self) -> &[LogEntry] {
        &self.entries
    }

    pub fn last_seq(&self) -> u64 {
        self.entries.last().map_or(0, |e| e.seq)
    }

    /// Entries with sequence strictly greater than `seq`.
    pub fn since(&self, seq: u64) -> &[LogEntry] {
        let start = self.entries.partition_point(|e| e.seq <= seq);
        &self.entries[start..]
    }

    /// Append after `floor` at the earliest, so numbering continues past a
    /// restored snapshot.
    pub fn append(
        &mut self,
        payload: LogPayload,
        ts: i64,
        floor: u64,
    ) -> Result<&LogEntry, LogError> {
        let entry = LogEntry::new(self.last_seq().max(floor) + 1, ts, payload)?;
        if let Some(path) = &self.path {
            let mut line = entry.to_line()?;
            line.push('\n');
            let mut f = OpenOptions::new().create(true).append(true).open(path)?;
            f.write_all(line.as_bytes())?;
            f.sync_data()?;
        }
        self.entries.push(entry);
        Ok(self.entries.last().expect("just pushed"))
    }

    /// Keep only entries up to and including `seq`, on disk and in memory.
    pub fn truncate_after(&mut self, seq: u64) -> Result<(), LogError> {
        self.entries.retain(|e| e.seq <= seq);
        if let Some(path) = &self.path {
            let mut f = File::create(path)?;
            for e in &self.entries {
                writeln!(f, "{}", e.to_line()?)?;
            }
            f.sync_data()?;
        }
        Ok(())
    }
}

/// Entries of the log at `path`, verified, stopping at the first bad one.
pub fn replay_file(path: &Path) -> Result<ReadOutcome, io::Error> {
    let bytes = std::fs::read(path)?;
    Ok(read_entries(&String::from_utf8_lossy(&bytes)))
}
