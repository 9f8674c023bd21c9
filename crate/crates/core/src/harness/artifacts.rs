//! CSV tables, digests and the run manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::ExperimentSpec;
use crate::error::{Error, Result};

/// Shortest round-trip decimal; scientific notation outside `[1e-5, 1e16)`.
pub fn format_number(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || !x.is_finite() || (1e-5..1e16).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

/// Table of formatted cells under a mandatory header row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: &[f64]) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows
            .push(row.iter().map(|&v| format_number(v)).collect());
    }

    pub fn push_cells(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Builds a table from a time column and equally long value columns.
    pub fn from_columns(names: &[String], columns: &[Vec<f64>]) -> Self {
        let mut table = Self::new(names.iter().cloned());
        let len = columns.first().map_or(0, Vec::len);
        let mut row = vec![0.0; columns.len()];
        for i in 0..len {
            for (slot, col) in row.iter_mut().zip(columns) {
                *slot = col[i];
            }
            table.push(&row);
        }
        table
    }

    pub fn render(&self) -> String {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for row in &self.rows {
            w.write_record(row).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("CSV is UTF-8")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Path relative to the output directory, `/`-separated.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes files below a root directory and keeps their inventory.
#[derive(Debug)]
pub struct ArtifactWriter {
    root: PathBuf,
    files: Vec<FileEntry>,
}

impl ArtifactWriter {
    pub fn new(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        std::fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
        Ok(Self {
            root,
            files: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write_bytes(&mut self, rel: &str, bytes: &[u8]) -> Result<FileEntry> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        let entry = FileEntry {
            path: rel.to_string(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len() as u64,
        };
        self.files.retain(|f| f.path != rel);
        self.files.push(entry.clone());
        Ok(entry)
    }

    pub fn write_csv(&mut self, rel: &str, table: &CsvTable) -> Result<FileEntry> {
        self.write_bytes(rel, table.render().as_bytes())
    }

    /// Records files written elsewhere below the root (e.g. by sweep cells).
    pub fn adopt(&mut self, prefix: &str, entries: &[FileEntry]) {
        for e in entries {
            let path = format!("{prefix}/{}", e.path);
            self.files.retain(|f| f.path != path);
            self.files.push(FileEntry { path, ..e.clone() });
        }
    }

    pub fn into_files(mut self) -> Vec<FileEntry> {
        self.files.sort_by(|a, b| a.path.cmp(&b.path));
        self.files
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ManifestStatus {
    Completed,
    /// Some cells or runs failed; the rest of the artifacts are valid.
    Partial,
    Failed,
    NoData,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub kind: String,
    pub seed: u64,
    pub status: ManifestStatus,
    pub errors: Vec<String>,
    /// Headline numbers; non-finite values are `null`.
    pub metrics: BTreeMap<String, Option<f64>>,
    pub files: Vec<FileEntry>,
    pub spec: ExperimentSpec,
}

pub const MANIFEST_FILE: &str = "manifest.json";

impl RunManifest {
    pub fn new(spec: &ExperimentSpec) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            kind: spec.kind.name().into(),
            seed: spec.seed,
            status: ManifestStatus::Completed,
            errors: Vec::new(),
            metrics: BTreeMap::new(),
            files: Vec::new(),
            spec: spec.clone(),
        }
    }

    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics.get(name).copied().flatten()
    }

    pub fn set_metric(&mut self, name: impl Into<String>, value: f64) {
        self.metrics
            .insert(name.into(), value.is_finite().then_some(value));
    }

    pub fn fail(&mut self, status: ManifestStatus, message: impl Into<String>) {
        if self.status != ManifestStatus::Failed {
            self.status = status;
        }
        self.errors.push(message.into());
    }

    pub fn completed(&self) -> bool {
        self.status == ManifestStatus::Completed
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifests serialize") + "\n"
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(MANIFEST_FILE);
        std::fs::write(&path, self.to_json()).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::invalid("manifest", e.to_string()))
    }

    /// Inventory entries whose file is missing or whose digest differs.
    pub fn verify(&self, dir: &Path) -> Vec<String> {
        self.files
            .iter()
            .filter(|f| match std::fs::read(dir.join(&f.path)) {
                Ok(bytes) => sha256_hex(&bytes) != f.sha256,
                Err(_) => true,
            })
            .map(|f| f.path.clone())
            .collect()
    }

    pub fn file(&self, name: &str) -> Option<&FileEntry> {
        self.files.iter().find(|f| f.path == name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn number_format() {
        assert_eq!(format_number(0.0), "0");
        assert_eq!(format_number(1.5), "1.5");
        assert_eq!(format_number(0.1 + 0.2), "0.30000000000000004");
        assert_eq!(format_number(1e-7), "1e-7");
        assert_eq!(format_number(-2.5e20), "-2.5e20");
        assert_eq!(format_number(f64::NAN), "NaN");
        for x in [1e-300, 3.0e-5, 123456.789, 9.99e15, -7.1e-12] {
            assert_eq!(format_number(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn table_rendering() {
        let mut t = CsvTable::new(["t", "v"]);
        t.push(&[0.0, 1.25]);
        t.push(&[0.5, -3.0]);
        assert_eq!(t.render(), "t,v\n0,1.25\n0.5,-3\n");
        let c =
            CsvTable::from_columns(&["a".into(), "b".into()], &[vec![1.0, 2.0], vec![3.0, 4.0]]);
        assert_eq!(c.render(), "a,b\n1,3\n2,4\n");
    }

    #[test]
    fn digests_track_files() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = ArtifactWriter::new(dir.path()).unwrap();
        let e = w.write_bytes("sub/x.csv", b"abc").unwrap();
        assert_eq!(
            e.sha256,
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        let spec = ExperimentSpec::new(super::super::config::ExperimentKind::PdeRun, 1);
        let mut m = RunManifest::new(&spec);
        m.files = w.into_files();
        assert!(m.verify(dir.path()).is_empty());
        std::fs::write(dir.path().join("sub/x.csv"), b"abd").unwrap();
        assert_eq!(m.verify(dir.path()), vec!["sub/x.csv".to_string()]);
        m.write(dir.path()).unwrap();
        assert_eq!(RunManifest::read(dir.path()).unwrap(), m);
    }
}
