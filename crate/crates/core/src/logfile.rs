//! Line-delimited log file: a header line followed by one canonical JSON
//! event per line.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use thiserror::Error;

use crate::canon;
use crate::store::{event_from_value, event_to_value, SubstrateEvent};

pub const LOG_HEADER: &str = r#"{"format":"artifact-substrate-log","version":1}"#;

#[derive(Debug, Error)]
pub enum LogError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} is not an artifact substrate log (bad header)")]
    BadHeader { path: String },
    #[error("{path}:{line}: {reason}")]
    BadLine {
        path: String,
        line: usize,
        reason: String,
    },
}

fn io_err(path: &Path, source: std::io::Error) -> LogError {
    LogError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Reads all events. A missing file is an empty log.
pub fn read_log(path: &Path) -> Result<Vec<SubstrateEvent>, LogError> {
    let file = match File::open(path) {
        Ok(file) => file,
        Err(err) if err.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(err) => return Err(io_err(path, err)),
    };
    let reader = BufReader::new(file);
    let mut events = Vec::new();
    let mut lines = reader.lines().enumerate();

    match lines.next() {
        None => return Ok(Vec::new()),
        Some((_, line)) => {
            let line = line.map_err(|e| io_err(path, e))?;
            if line != LOG_HEADER {
                return Err(LogError::BadHeader {
                    path: path.display().to_string(),
                });
            }
        }
    }

    for (index, line) in lines {
        let line = line.map_err(|e| io_err(path, e))?;
        if line.is_empty() {
            continue;
        }
        let value = canon::parse_json(&line).map_err(|e| LogError::BadLine {
            path: path.display().to_string(),
            line: index + 1,
            reason: e.to_string(),
        })?;
        let event = event_from_value(&value).map_err(|e| LogError::BadLine {
            path: path.display().to_string(),
            line: index + 1,
            reason: e.to_string(),
        })?;
        events.push(event);
    }
    Ok(events)
}

/// Appends events, writing the header first when the file is new or empty.
pub fn append_events(
    path: &Path,
    events: &[SubstrateEvent],
    fsync: bool,
) -> Result<(), LogError> {
    let mut file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| io_err(path, e))?;
    let empty = file.metadata().map_err(|e| io_err(path, e))?.len() == 0;
    let mut buffer = String::new();
    if empty {
        buffer.push_str(LOG_HEADER);
        buffer.push('\n');
    }
    for event in events {
        buffer.push_str(&canon::canonical_json(&event_to_value(event)));
        buffer.push('\n');
    }
    file.write_all(buffer.as_bytes())
        .map_err(|e| io_err(path, e))?;
    if fsync {
        file.sync_data().map_err(|e| io_err(path, e))?;
    }
    Ok(())
}
