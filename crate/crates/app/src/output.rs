//! File outputs: CSV time series, flat binary field snapshots and the run
//! manifest.
//!
//! Snapshot layout (little-endian):
//!
//! ```text
//! magic    8 bytes  "SEGRKSNP"
//! version  u32      1
//! rank     u32
//! dims     u64 x rank   slowest axis first
//! dtype    u8       1 = f64
//! payload  f64 x prod(dims), row-major
//! ```

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

pub const SNAPSHOT_MAGIC: &[u8; 8] = b"SEGRKSNP";
pub const SNAPSHOT_VERSION: u32 = 1;
pub const DTYPE_F64: u8 = 1;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FileRecord {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

/// Collects emitted files relative to an output directory.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    files: Vec<FileRecord>,
}

impl OutputDir {
    pub fn create(root: &Path) -> std::io::Result<Self> {
        fs::create_dir_all(root)?;
        Ok(OutputDir {
            root: root.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> std::io::Result<()> {
        let path = self.root.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::File::create(&path)?.write_all(bytes)?;
        self.files.retain(|f| f.path != name);
        self.files.push(FileRecord {
            path: name.to_string(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len() as u64,
        });
        Ok(())
    }

    pub fn write_csv(&mut self, name: &str, table: &Table) -> std::io::Result<()> {
        self.write(name, &table.to_bytes()?)
    }

    pub fn write_snapshot(&mut self, name: &str, dims: &[usize], data: &[f64]) -> std::io::Result<()> {
        self.write(name, &encode_snapshot(dims, data))
    }

    pub fn files(&self) -> &[FileRecord] {
        &self.files
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

/// A CSV table with a fixed header.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

/// One CSV cell. Floats use the shortest round-trip representation.
pub enum Cell<'a> {
    F(f64),
    I(u64),
    S(&'a str),
    B(bool),
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: &[Cell]) {
        assert_eq!(row.len(), self.header.len(), "row width must match the header");
        self.rows.push(
            row.iter()
                .map(|c| match c {
                    Cell::F(x) => format!("{x:?}"),
                    Cell::I(i) => i.to_string(),
                    Cell::S(s) => s.to_string(),
                    Cell::B(b) => b.to_string(),
                })
                .collect(),
        );
    }

    pub fn push_floats(&mut self, row: &[f64]) {
        let cells: Vec<Cell> = row.iter().map(|x| Cell::F(*x)).collect();
        self.push(&cells);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn to_bytes(&self) -> std::io::Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.into_inner().map_err(|e| std::io::Error::other(e.to_string()))
    }
}

pub fn encode_snapshot(dims: &[usize], data: &[f64]) -> Vec<u8> {
    assert_eq!(dims.iter().product::<usize>(), data.len(), "snapshot dims must match the payload");
    let mut out = Vec::with_capacity(17 + 8 * dims.len() + 8 * data.len());
    out.extend_from_slice(SNAPSHOT_MAGIC);
    out.extend_from_slice(&SNAPSHOT_VERSION.to_le_bytes());
    out.extend_from_slice(&(dims.len() as u32).to_le_bytes());
    for d in dims {
        out.extend_from_slice(&(*d as u64).to_le_bytes());
    }
    out.push(DTYPE_F64);
    for x in data {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum SnapshotError {
    #[error("snapshot is truncated")]
    Truncated,
    #[error("bad magic bytes")]
    Magic,
    #[error("unsupported version {0}")]
    Version(u32),
    #[error("unsupported dtype tag {0}")]
    Dtype(u8),
    #[error("payload length does not match dims")]
    Length,
}

/// Decodes a snapshot into `(dims, data)`.
pub fn decode_snapshot(bytes: &[u8]) -> Result<(Vec<usize>, Vec<f64>), SnapshotError> {
    let take = |at: usize, n: usize| bytes.get(at..at + n).ok_or(SnapshotError::Truncated);
    if take(0, 8)? != SNAPSHOT_MAGIC {
        return Err(SnapshotError::Magic);
    }
    let version = u32::from_le_bytes(take(8, 4)?.try_into().expect("4 bytes"));
    if version != SNAPSHOT_VERSION {
        return Err(SnapshotError::Version(version));
    }
    let rank = u32::from_le_bytes(take(12, 4)?.try_into().expect("4 bytes")) as usize;
    let mut dims = Vec::with_capacity(rank);
    for r in 0..rank {
        dims.push(u64::from_le_bytes(take(16 + 8 * r, 8)?.try_into().expect("8 bytes")) as usize);
    }
    let at = 16 + 8 * rank;
    let dtype = take(at, 1)?[0];
    if dtype != DTYPE_F64 {
        return Err(SnapshotError::Dtype(dtype));
    }
    let payload = &bytes[at + 1..];
    let n: usize = dims.iter().product();
    if payload.len() != 8 * n {
        return Err(SnapshotError::Length);
    }
    let data = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok((dims, data))
}

#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub experiment: String,
    pub code_version: String,
    pub seed: u64,
    pub threads: usize,
    pub started: String,
    pub finished: String,
    /// Canonical configuration text with defaults filled in.
    pub config_echo: String,
    pub config: serde_json::Value,
    pub summary: serde_json::Value,
    pub files: Vec<FileRecord>,
}

/// Machine-readable failure record.
#[derive(Clone, Debug, Serialize)]
pub struct ErrorRecord {
    pub kind: String,
    pub message: String,
    pub experiment: Option<String>,
    pub line: Option<usize>,
    pub key: Option<String>,
}
