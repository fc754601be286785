//! Append-only JSON-lines logs shared by the conversation and profile stores.
//!
//! Each record is one JSON object followed by `\n`, written with a single
//! `write_all`. On open, an unterminated final line is a torn write from a
//! crash and is truncated away; any other malformed line is corruption.

use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LogError {
    #[error("log I/O: {0}")]
    Io(#[from] io::Error),
    #[error("corrupt log record on line {line}: {message}")]
    Corrupt { line: usize, message: String },
}

/// Destination for encoded records. An implementation must leave no partial
/// record behind when `append` fails.
pub trait LogSink: Send {
    fn append(&mut self, bytes: &[u8]) -> io::Result<()>;
}

/// Discards records; backs in-memory stores.
#[derive(Debug, Default)]
pub struct NullSink;

impl LogSink for NullSink {
    fn append(&mut self, _bytes: &[u8]) -> io::Result<()> {
        Ok(())
    }
}

#[derive(Debug)]
pub struct FileSink {
    file: File,
    len: u64,
    fsync: bool,
}

impl LogSink for FileSink {
    fn append(&mut self, bytes: &[u8]) -> io::Result<()> {
        let result = self.file.write_all(bytes).and_then(|_| {
            if self.fsync {
                self.file.sync_data()
            } else {
                Ok(())
            }
        });
        match result {
            Ok(()) => {
                self.len += bytes.len() as u64;
                Ok(())
            }
            Err(e) => {
                // Best effort: drop whatever part of the record made it out.
                let _ = self.file.set_len(self.len);
                Err(e)
            }
        }
    }
}

/// Encodes records as newline-terminated JSON.
pub fn encode<T: Serialize>(records: &[T]) -> Vec<u8> {
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, r).expect("log records serialize");
        out.push(b'\n');
    }
    out
}

/// Replays the log at `path`, creating it if missing, and returns the records
/// with a sink positioned after the last complete one.
pub fn open<T: DeserializeOwned>(path: &Path, fsync: bool) -> Result<(Vec<T>, FileSink), LogError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let bytes = match fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == io::ErrorKind::NotFound => Vec::new(),
        Err(e) => return Err(e.into()),
    };

    let mut records = Vec::new();
    let mut valid_len = 0usize;
    for (i, line) in bytes.split_inclusive(|&b| b == b'\n').enumerate() {
        if line.last() != Some(&b'\n') {
            log::warn!(
                "{}: truncating torn final record on line {}",
                path.display(),
                i + 1
            );
            break;
        }
        let body = &line[..line.len() - 1];
        if body.iter().all(u8::is_ascii_whitespace) {
            valid_len += line.len();
            continue;
        }
        let record = serde_json::from_slice(body).map_err(|e| LogError::Corrupt {
            line: i + 1,
            message: e.to_string(),
        })?;
        records.push(record);
        valid_len += line.len();
    }

    let file = OpenOptions::new().create(true).append(true).open(path)?;
    if (valid_len as u64) < file.metadata()?.len() {
        file.set_len(valid_len as u64)?;
    }
    Ok((
        records,
        FileSink {
            file,
            len: valid_len as u64,
            fsync,
        },
    ))
}
