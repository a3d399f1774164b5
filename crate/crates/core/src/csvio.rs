//! Shared CSV plumbing: writers that report the offending path and a float
//! format that round-trips exactly.

use std::fs::File;
use std::path::Path;

use crate::error::{Error, Result};

/// Shortest representation that parses back to the same `f64`.
pub fn fmt(x: f64) -> String {
    format!("{x:e}")
}

pub(crate) fn writer(path: &Path) -> Result<csv::Writer<File>> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(f))
}

pub(crate) fn finish(mut w: csv::Writer<File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}
