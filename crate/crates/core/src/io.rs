//! On-disk formats: field snapshots, JSON-lines observables, CSV tables and
//! the run manifest.
//!
//! Snapshot layout (little endian): 8-byte magic `RSHESNP1`, `u64` grid size
//! `N`, then `N` `f64` values in storage order (`j = -N/2+1, ..., N/2`).

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::spectral::{GridField, GridSpec};

pub const SNAPSHOT_MAGIC: &[u8; 8] = b"RSHESNP1";
pub const MANIFEST_NAME: &str = "manifest.json";

pub fn write_snapshot(path: &Path, field: &GridField) -> Result<()> {
    let mut buf = Vec::with_capacity(16 + 8 * field.values().len());
    buf.extend_from_slice(SNAPSHOT_MAGIC);
    buf.extend_from_slice(&(field.values().len() as u64).to_le_bytes());
    for v in field.values() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn read_snapshot(path: &Path) -> Result<GridField> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let bad = |msg: &str| Error::InvalidInput(format!("{}: {msg}", path.display()));
    if bytes.len() < 16 || &bytes[..8] != SNAPSHOT_MAGIC {
        return Err(bad("not a snapshot file"));
    }
    let n = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    if bytes.len() != 16 + 8 * n {
        return Err(bad(&format!("expected {} values, file holds {} bytes", n, bytes.len())));
    }
    let values = bytes[16..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    GridField::new(GridSpec::new(n)?, values)
}

/// Buffered writer that keeps its path for error messages.
pub struct DataFile {
    path: PathBuf,
    out: BufWriter<File>,
}

impl DataFile {
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        Ok(Self {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
        })
    }

    pub fn write_line(&mut self, line: &str) -> Result<()> {
        writeln!(self.out, "{line}").map_err(|e| Error::io(&self.path, e))
    }

    pub fn write_json_line<T: Serialize>(&mut self, row: &T) -> Result<()> {
        let line = serde_json::to_string(row).map_err(|e| Error::InvalidInput(e.to_string()))?;
        self.write_line(&line)
    }

    pub fn write_csv_row<I: IntoIterator<Item = S>, S: ToString>(&mut self, cells: I) -> Result<()> {
        let line: Vec<String> = cells.into_iter().map(|c| c.to_string()).collect();
        self.write_line(&line.join(","))
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush().map_err(|e| Error::io(&self.path, e))
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::InvalidInput(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub experiment: String,
    pub seed: u64,
    pub status: String,
    /// Seconds since the Unix epoch; the only field that varies between
    /// identical runs.
    pub created_unix: u64,
    pub config: serde_json::Value,
    /// Data files in the output directory, relative names.
    pub files: Vec<String>,
}

impl Manifest {
    pub fn new(experiment: &str, seed: u64, config: serde_json::Value) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            experiment: experiment.to_string(),
            seed,
            status: "running".into(),
            created_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_secs()),
            config,
            files: Vec::new(),
        }
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        write_json(&dir.join(MANIFEST_NAME), self)
    }
}
