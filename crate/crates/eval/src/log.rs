//! Append-only JSON-lines event log.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use crate::error::{EvalError, Result};
use crate::protocol::{Event, LeaderboardState, LogRecord};

/// Reads every record of a log file. A missing file is an empty log; a torn
/// final line (crash mid-append) is ignored, any other malformed line is an error.
pub fn read_log(path: &Path) -> Result<Vec<LogRecord>> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e.into()),
    };
    let lines: Vec<String> = BufReader::new(file).lines().collect::<std::io::Result<_>>()?;
    let mut out = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<LogRecord>(line) {
            Ok(r) => out.push(r),
            Err(_) if i + 1 == lines.len() => break,
            Err(e) => {
                return Err(EvalError::CorruptLog {
                    line: i + 1,
                    detail: e.to_string(),
                })
            }
        }
    }
    Ok(out)
}

pub fn replay_file(path: &Path) -> Result<LeaderboardState> {
    LeaderboardState::replay(&read_log(path)?)
}

/// Single writer over a log file, holding the state folded from it.
#[derive(Debug)]
pub struct EventLog {
    path: PathBuf,
    file: File,
    state: LeaderboardState,
}

impl EventLog {
    /// Opens (creating if needed) and replays the log. A torn final line is
    /// truncated away so the next append starts on a clean line.
    pub fn open(path: &Path) -> Result<Self> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        let records = read_log(path)?;
        let state = LeaderboardState::replay(&records)?;
        let mut clean = String::new();
        for r in &records {
            clean.push_str(&serde_json::to_string(r)?);
            clean.push('\n');
        }
        let on_disk = fs::read_to_string(path).unwrap_or_default();
        if on_disk != clean {
            fs::write(path, &clean)?;
        }
        let file = OpenOptions::new().append(true).create(true).open(path)?;
        Ok(Self {
            path: path.to_path_buf(),
            file,
            state,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn state(&self) -> &LeaderboardState {
        &self.state
    }

    /// Durably appends one event and folds it into the state.
    pub fn append(&mut self, event: Event) -> Result<LogRecord> {
        let record = LogRecord {
            seq: self.state.next_seq(),
            event,
        };
        let mut line = serde_json::to_string(&record)?;
        line.push('\n');
        self.file.write_all(line.as_bytes())?;
        self.file.sync_data()?;
        self.state.apply(&record)?;
        Ok(record)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{TimeZone, Utc};

    #[test]
    fn torn_tail_is_dropped_on_open() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("events.jsonl");
        let mut log = EventLog::open(&path).unwrap();
        log.append(Event::WindowClosed {
            at: Utc.with_ymd_and_hms(2019, 1, 1, 0, 0, 0).unwrap(),
        })
        .unwrap();
        drop(log);
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(b"{\"seq\":1,\"ty").unwrap();
        drop(f);
        let mut log = EventLog::open(&path).unwrap();
        assert_eq!(log.state().next_seq(), 1);
        log.append(Event::WindowClosed {
            at: Utc.with_ymd_and_hms(2019, 1, 2, 0, 0, 0).unwrap(),
        })
        .unwrap();
        assert_eq!(read_log(&path).unwrap().len(), 2);
    }

    #[test]
    fn corrupt_middle_line_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("events.jsonl");
        fs::write(
            &path,
            "garbage\n{\"seq\":0,\"type\":\"window_closed\",\"at\":\"2019-01-01T00:00:00Z\"}\n",
        )
        .unwrap();
        assert!(matches!(read_log(&path), Err(EvalError::CorruptLog { line: 1, .. })));
    }
}
