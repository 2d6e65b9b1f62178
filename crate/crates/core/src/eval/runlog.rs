//! Append-only JSONL run log of judgments.

use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use log::warn;

use super::Judgment;
use crate::error::EvalError;

/// Parse a run log's text. A final line without a trailing newline that does
/// not parse is reported as torn rather than as an error.
pub fn parse_log(path: &Path, text: &str) -> Result<(Vec<Judgment>, Option<usize>), EvalError> {
    let mut judgments = Vec::new();
    let mut torn_at = None;
    let mut offset = 0;
    let mut lines = text.split_inclusive('\n').enumerate().peekable();
    while let Some((idx, raw)) = lines.next() {
        let line_start = offset;
        offset += raw.len();
        let terminated = raw.ends_with('\n');
        let body = raw.trim();
        if body.is_empty() {
            continue;
        }
        match serde_json::from_str::<Judgment>(body) {
            Ok(j) => judgments.push(j),
            Err(_) if !terminated && lines.peek().is_none() => torn_at = Some(line_start),
            Err(e) => {
                return Err(EvalError::LogParse {
                    path: path.to_path_buf(),
                    line: idx + 1,
                    message: e.to_string(),
                })
            }
        }
    }
    Ok((judgments, torn_at))
}

pub fn read_log(path: &Path) -> Result<Vec<Judgment>, EvalError> {
    let text = fs::read_to_string(path).map_err(|source| EvalError::LogIo {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(parse_log(path, &text)?.0)
}

pub fn log_to_string(judgments: &[Judgment]) -> String {
    let mut out = String::new();
    for j in judgments {
        out.push_str(&serde_json::to_string(j).expect("judgment serializes"));
        out.push('\n');
    }
    out
}

/// Writable handle on a run log. Opening repairs a torn final line left by an
/// interrupted writer.
#[derive(Debug)]
pub struct RunLog {
    path: PathBuf,
    file: File,
    existing: Vec<Judgment>,
}

impl RunLog {
    pub fn open(path: &Path) -> Result<Self, EvalError> {
        let io_err = |source: io::Error| EvalError::LogIo {
            path: path.to_path_buf(),
            source,
        };
        let text = match fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) if e.kind() == io::ErrorKind::NotFound => String::new(),
            Err(e) => return Err(io_err(e)),
        };
        let (existing, torn_at) = parse_log(path, &text)?;
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(io_err)?;
        if let Some(at) = torn_at {
            warn!("{}: dropping torn final line", path.display());
            file.set_len(at as u64).map_err(io_err)?;
        } else if !text.is_empty() && !text.ends_with('\n') {
            file.write_all(b"\n").map_err(io_err)?;
        }
        Ok(Self {
            path: path.to_path_buf(),
            file,
            existing,
        })
    }

    /// Judgments present when the log was opened.
    pub fn existing(&self) -> &[Judgment] {
        &self.existing
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&mut self, judgment: &Judgment) -> Result<(), EvalError> {
        let mut line = serde_json::to_string(judgment).expect("judgment serializes");
        line.push('\n');
        self.file
            .write_all(line.as_bytes())
            .and_then(|()| self.file.flush())
            .map_err(|source| EvalError::LogIo {
                path: self.path.clone(),
                source,
            })
    }

    pub fn sync(&mut self) -> Result<(), EvalError> {
        self.file.sync_data().map_err(|source| EvalError::LogIo {
            path: self.path.clone(),
            source,
        })
    }
}
