//! Run artifacts: numeric CSV tables with unit-annotated headers and a JSON
//! manifest that ties every file produced by a run to the fully resolved
//! configuration, seed and code version.
//!
//! Float cells are written with Rust's shortest round-trip formatting, so a
//! rerun with identical inputs reproduces every table byte for byte.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::params::RunConfig;

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("serialization failed: {0}")]
    Json(#[from] serde_json::Error),
    #[error("table `{name}`: row {row} has {got} cells, expected {expected}")]
    RaggedRow {
        name: String,
        row: usize,
        got: usize,
        expected: usize,
    },
}

fn io_err(path: &Path, source: std::io::Error) -> OutputError {
    OutputError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// 64-bit FNV-1a hex digest of the canonical JSON of the resolved
/// configuration; identifies a parameter set across runs.
pub fn config_hash(config: &RunConfig) -> Result<String, OutputError> {
    let json = serde_json::to_string(config)?;
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in json.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    Ok(format!("{h:016x}"))
}

/// One output file as recorded in the manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestFile {
    /// Path relative to the manifest.
    pub path: String,
    pub description: String,
    /// Data rows (excluding the two header lines).
    pub rows: usize,
}

/// The run manifest: everything needed to attribute and reproduce the
/// artifacts of one CLI invocation. Each output file is referenced by
/// exactly one manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub code_version: String,
    pub seed: u64,
    pub config_hash: String,
    pub config: RunConfig,
    pub warnings: Vec<String>,
    pub files: Vec<ManifestFile>,
    /// Wall-clock timings per stage, milliseconds.
    pub timings_ms: Vec<(String, f64)>,
}

/// Collects CSV tables plus metadata for one run and finishes by writing
/// `manifest.json` next to them.
pub struct RunWriter {
    dir: PathBuf,
    manifest: Manifest,
}

impl RunWriter {
    pub fn new(
        dir: &Path,
        command: &str,
        config: &RunConfig,
        seed: u64,
    ) -> Result<Self, OutputError> {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        Ok(RunWriter {
            dir: dir.to_path_buf(),
            manifest: Manifest {
                command: command.to_string(),
                code_version: env!("CARGO_PKG_VERSION").to_string(),
                seed,
                config_hash: config_hash(config)?,
                config: config.clone(),
                warnings: Vec::new(),
                files: Vec::new(),
                timings_ms: Vec::new(),
            },
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn warn(&mut self, message: String) {
        self.manifest.warnings.push(message);
    }

    pub fn timing(&mut self, stage: &str, millis: f64) {
        self.manifest.timings_ms.push((stage.to_string(), millis));
    }

    /// Write `<name>.csv`: a `#` comment line annotating every column with
    /// its unit, the column-name line, then the data rows.
    pub fn write_table(
        &mut self,
        name: &str,
        description: &str,
        columns: &[(&str, &str)],
        rows: &[Vec<f64>],
    ) -> Result<PathBuf, OutputError> {
        let file_name = format!("{name}.csv");
        let path = self.dir.join(&file_name);
        let file = File::create(&path).map_err(|e| io_err(&path, e))?;
        let mut w = BufWriter::new(file);
        let annotated: Vec<String> = columns
            .iter()
            .map(|(c, u)| format!("{c} [{u}]"))
            .collect();
        writeln!(w, "# {description}; columns: {}", annotated.join(", "))
            .map_err(|e| io_err(&path, e))?;
        let names: Vec<&str> = columns.iter().map(|(c, _)| *c).collect();
        writeln!(w, "{}", names.join(",")).map_err(|e| io_err(&path, e))?;
        for (i, row) in rows.iter().enumerate() {
            if row.len() != columns.len() {
                return Err(OutputError::RaggedRow {
                    name: name.to_string(),
                    row: i,
                    got: row.len(),
                    expected: columns.len(),
                });
            }
            let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            writeln!(w, "{}", cells.join(",")).map_err(|e| io_err(&path, e))?;
        }
        w.flush().map_err(|e| io_err(&path, e))?;
        self.manifest.files.push(ManifestFile {
            path: file_name,
            description: description.to_string(),
            rows: rows.len(),
        });
        Ok(path)
    }

    /// Write the manifest and return its path.
    pub fn finish(self) -> Result<PathBuf, OutputError> {
        let path = self.dir.join("manifest.json");
        let json = serde_json::to_string_pretty(&self.manifest)?;
        fs::write(&path, json + "\n").map_err(|e| io_err(&path, e))?;
        Ok(path)
    }
}
