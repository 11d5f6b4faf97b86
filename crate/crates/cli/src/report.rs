use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};
use slowfast::real::format_round_trip;

use crate::error::CliError;

/// Round-trip exact text form of a float (17 significant digits).
pub fn num(v: f64) -> String {
    format_round_trip(v)
}

/// Comma-separated table built row by row.
pub struct Table {
    text: String,
    width: usize,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self { text: format!("{}\n", header.join(",")), width: header.len() }
    }

    pub fn with_header(header: Vec<String>) -> Self {
        Self { width: header.len(), text: format!("{}\n", header.join(",")) }
    }

    pub fn row(&mut self, cells: Vec<String>) {
        debug_assert_eq!(cells.len(), self.width);
        self.text.push_str(&cells.join(","));
        self.text.push('\n');
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub study: String,
    pub toolkit_version: String,
    /// Effective configuration, after command-line overrides.
    pub config: String,
    pub seed: u64,
    pub jobs: usize,
    pub started_unix_seconds: u64,
    pub wall_clock_seconds: f64,
    pub files: Vec<FileDigest>,
}

/// Output directory that records every file written into it.
pub struct OutputDir {
    root: PathBuf,
    files: Vec<FileDigest>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(root).map_err(|source| CliError::Io { path: root.to_path_buf(), source })?;
        Ok(Self { root: root.to_path_buf(), files: Vec::new() })
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.root.join(name);
        let mut f = fs::File::create(&path).map_err(|source| CliError::Io { path: path.clone(), source })?;
        f.write_all(bytes).map_err(|source| CliError::Io { path: path.clone(), source })?;
        self.files.push(FileDigest {
            path: name.to_string(),
            bytes: bytes.len() as u64,
            sha256: hex::encode(Sha256::digest(bytes)),
        });
        Ok(())
    }

    pub fn write_table(&mut self, name: &str, table: Table) -> Result<(), CliError> {
        self.write_bytes(name, table.text.as_bytes())
    }

    pub fn write_json<S: Serialize>(&mut self, name: &str, value: &S) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).expect("reports serialise to JSON");
        text.push('\n');
        self.write_bytes(name, text.as_bytes())
    }

    pub fn finish(self, mut manifest: RunManifest) -> Result<PathBuf, CliError> {
        manifest.files = self.files;
        let path = self.root.join("manifest.json");
        let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serialises");
        text.push('\n');
        fs::write(&path, text).map_err(|source| CliError::Io { path: path.clone(), source })?;
        Ok(path)
    }
}
