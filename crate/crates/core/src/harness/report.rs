use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Header carried by every report.
pub const PROXY_NOTE: &str = "desk-scale proxy metrics on a seeded toy backbone: hidden-state \
divergence, retrieval entropy and norm drift. These are not task success rates.";

#[derive(Clone, Debug, Serialize)]
pub struct Envelope<'a, T: Serialize> {
    pub schema_version: u32,
    pub kind: &'a str,
    pub note: &'a str,
    pub report: &'a T,
}

/// Pretty JSON wrapped in the common envelope.
pub fn to_json<T: Serialize>(kind: &str, report: &T) -> Result<String> {
    let env = Envelope {
        schema_version: REPORT_SCHEMA_VERSION,
        kind,
        note: PROXY_NOTE,
        report,
    };
    let mut s = serde_json::to_string_pretty(&env)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(path: &Path, kind: &str, report: &T) -> Result<()> {
    ensure_parent(path)?;
    fs::write(path, to_json(kind, report)?).map_err(|e| Error::io(path, e))
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    ensure_parent(path)?;
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(())
}
