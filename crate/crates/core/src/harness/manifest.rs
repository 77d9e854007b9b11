//! Output directories with atomic writes and a closing manifest.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub name: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub label: String,
    pub seconds: f64,
}

/// Something worth knowing that did not stop the run: applied jitter,
/// slow convergence, a failed cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Incident {
    pub cell: String,
    pub kind: String,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub experiment: String,
    pub config_hash: String,
    pub version: String,
    pub seeds: Vec<u64>,
    pub timings: Vec<Timing>,
    pub incidents: Vec<Incident>,
    /// Cells that produced no result.
    pub failures: Vec<Incident>,
    pub files: Vec<FileEntry>,
}

impl RunManifest {
    pub fn new(experiment: &str, config_hash: &str, seeds: &[u64]) -> Self {
        RunManifest {
            experiment: experiment.into(),
            config_hash: config_hash.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            seeds: seeds.to_vec(),
            timings: Vec::new(),
            incidents: Vec::new(),
            failures: Vec::new(),
            files: Vec::new(),
        }
    }

    pub fn incident(&mut self, cell: impl Into<String>, kind: impl Into<String>, message: impl Into<String>) {
        self.incidents.push(Incident {
            cell: cell.into(),
            kind: kind.into(),
            message: message.into(),
        });
    }

    pub fn failure(&mut self, cell: impl Into<String>, err: &Error) {
        self.failures.push(Incident {
            cell: cell.into(),
            kind: err.kind().into(),
            message: err.to_string(),
        });
    }

    pub fn time(&mut self, label: impl Into<String>, seconds: f64) {
        self.timings.push(Timing {
            label: label.into(),
            seconds,
        });
    }
}

/// Writes each file once via a temporary sibling and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::Io(std::io::Error::other(format!("{} has no file name", path.display()))))?;
    let tmp = path.with_file_name(format!(".{}.tmp", name.to_string_lossy()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// An experiment's output directory. Every file goes through [`OutputDir::write`]
/// so the manifest inventory matches the directory.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    files: Vec<FileEntry>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root)?;
        Ok(OutputDir {
            root: root.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        if self.files.iter().any(|f| f.name == name) {
            return Err(Error::Internal(format!("{name} written twice")));
        }
        write_atomic(&self.root.join(name), bytes)?;
        self.files.push(FileEntry {
            name: name.into(),
            bytes: bytes.len() as u64,
            sha256: hex::encode(Sha256::digest(bytes)),
        });
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.write(name, &bytes)
    }

    /// Writes the manifest last; its own entry is not part of the inventory.
    pub fn finish(self, name: &str, mut manifest: RunManifest) -> Result<RunManifest> {
        manifest.files = self.files;
        let mut bytes = serde_json::to_vec_pretty(&manifest)?;
        bytes.push(b'\n');
        write_atomic(&self.root.join(name), &bytes)?;
        Ok(manifest)
    }
}

/// Serializes rows to CSV bytes with a header.
pub fn csv_bytes<T: Serialize>(rows: &[T], header_if_empty: &[&str]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    if rows.is_empty() {
        w.write_record(header_if_empty)?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}
