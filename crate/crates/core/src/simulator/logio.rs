//! Newline-delimited JSON session logs: one `NestedSessionLog` object per
//! line. Lines starting with `#` are comments.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::NestedSessionLog;
use crate::error::{Error, Result};

/// Writes one record per line. `comment`, when given, becomes a leading `# ` line.
pub fn write_logs(path: &Path, logs: &[NestedSessionLog], comment: Option<&str>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    if let Some(c) = comment {
        writeln!(out, "# {c}").map_err(|e| Error::io(path, e))?;
    }
    for log in logs {
        serde_json::to_writer(&mut out, log)?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Reads and validates every record. Blank and comment lines are skipped.
pub fn read_logs(path: &Path) -> Result<Vec<NestedSessionLog>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut logs = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let log: NestedSessionLog = serde_json::from_str(&line)
            .map_err(|e| Error::InvalidLog(format!("line {}: {e}", lineno + 1)))?;
        log.validate()
            .map_err(|e| Error::InvalidLog(format!("line {}: {e}", lineno + 1)))?;
        logs.push(log);
    }
    Ok(logs)
}
