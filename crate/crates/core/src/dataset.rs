//! Labelled-sample manifests and the snapshot sidecar.
//!
//! A dataset is a line-delimited JSON manifest (one record per sample, in
//! generation order) plus an optional binary sidecar holding the shifted
//! 2-point snapshots of the same samples, so downstream stages can reuse
//! them without re-running the FFTs.

use crate::binio::*;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

/// One labelled sample of the image -> conductivity mapping.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DatasetRecord {
    /// Path of the stored image, relative to the manifest.
    pub image_path: String,
    pub f_b: f64,
    pub resolution: usize,
    /// Material contrast of the phase law used for labelling.
    pub contrast: f64,
    /// Normalized Voigt vector (k11, k22, sqrt(2) k12).
    pub kappa_voigt: [f64; 3],
    pub solver_residual: f64,
    /// Seed of the generating sub-stream.
    pub seed: u64,
    /// Hash of the producing configuration.
    pub config_hash: String,
}

pub fn write_manifest(path: &Path, records: &[DatasetRecord]) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    for rec in records {
        let line = serde_json::to_string(rec)
            .map_err(|e| Error::InvalidFormat(format!("manifest serialization: {e}")))?;
        w.write_all(line.as_bytes())?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<Vec<DatasetRecord>> {
    let file =
        std::fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let mut records = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: DatasetRecord = serde_json::from_str(&line)
            .map_err(|e| Error::InvalidFormat(format!("manifest line {}: {e}", idx + 1)))?;
        records.push(rec);
    }
    Ok(records)
}

const SIDECAR_MAGIC: &[u8; 4] = b"MKSN";
const SIDECAR_VERSION: u32 = 1;

/// Streaming writer for the snapshot sidecar.
pub struct SidecarWriter<W: Write> {
    inner: W,
    dim: usize,
    written: u64,
}

impl SidecarWriter<BufWriter<std::fs::File>> {
    /// `count` must match the number of snapshots that will be appended.
    pub fn create(path: &Path, dim: usize, count: u64) -> Result<Self> {
        let file = BufWriter::new(std::fs::File::create(path)?);
        Self::new(file, dim, count)
    }
}

impl<W: Write> SidecarWriter<W> {
    pub fn new(mut inner: W, dim: usize, count: u64) -> Result<Self> {
        inner.write_all(SIDECAR_MAGIC)?;
        write_u32(&mut inner, SIDECAR_VERSION)?;
        write_u64(&mut inner, dim as u64)?;
        write_u64(&mut inner, count)?;
        Ok(Self {
            inner,
            dim,
            written: 0,
        })
    }

    pub fn append(&mut self, snapshot: &[f64]) -> Result<()> {
        if snapshot.len() != self.dim {
            return Err(Error::ResolutionMismatch {
                expected: self.dim,
                got: snapshot.len(),
            });
        }
        write_f64_slice(&mut self.inner, snapshot)?;
        self.written += 1;
        Ok(())
    }

    pub fn finish(mut self, expected: u64) -> Result<()> {
        self.inner.flush()?;
        if self.written != expected {
            return Err(Error::InvalidFormat(format!(
                "sidecar holds {} snapshots, header promised {expected}",
                self.written
            )));
        }
        Ok(())
    }
}

/// Streaming reader for the snapshot sidecar.
pub struct SidecarReader<R: Read> {
    inner: R,
    dim: usize,
    remaining: u64,
}

impl SidecarReader<BufReader<std::fs::File>> {
    pub fn open(path: &Path) -> Result<Self> {
        let file = BufReader::new(
            std::fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?,
        );
        Self::new(file)
    }
}

impl<R: Read> SidecarReader<R> {
    pub fn new(mut inner: R) -> Result<Self> {
        expect_magic(&mut inner, SIDECAR_MAGIC, "snapshot sidecar")?;
        let version = read_u32(&mut inner)?;
        if version != SIDECAR_VERSION {
            return Err(Error::InvalidFormat(format!(
                "unsupported sidecar version {version}"
            )));
        }
        let dim = read_u64(&mut inner)? as usize;
        let remaining = read_u64(&mut inner)?;
        Ok(Self {
            inner,
            dim,
            remaining,
        })
    }

    /// Snapshot dimension `n`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn remaining(&self) -> u64 {
        self.remaining
    }

    pub fn next_snapshot(&mut self) -> Result<Option<Vec<f64>>> {
        if self.remaining == 0 {
            return Ok(None);
        }
        let values = read_f64_vec(&mut self.inner, self.dim)?;
        self.remaining -= 1;
        Ok(Some(values))
    }
}
