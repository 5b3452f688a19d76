//! Output directory bookkeeping, tables and run manifests.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use pcp_core::{Error, Result};

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Text(String),
    Int(i64),
    Num(f64),
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Text(s) => s.clone(),
            Cell::Int(i) => i.to_string(),
            Cell::Num(v) => v.to_string(),
        }
    }

    fn text(&self) -> String {
        match self {
            Cell::Text(s) => s.clone(),
            Cell::Int(i) => i.to_string(),
            Cell::Num(v) if !v.is_finite() => v.to_string(),
            Cell::Num(v) if *v == 0.0 => "0".into(),
            Cell::Num(v) if v.abs() < 1e-3 || v.abs() >= 1e6 => format!("{v:.4e}"),
            Cell::Num(v) => format!("{v:.6}"),
        }
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.into())
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Text(s)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Text(v.to_string())
    }
}

/// A table written both as CSV and as aligned text.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::csv))?;
        }
        w.into_inner().map_err(|e| Error::Serde(e.to_string()))
    }

    pub fn to_text(&self) -> String {
        let cells: Vec<Vec<String>> = self.rows.iter().map(|r| r.iter().map(Cell::text).collect()).collect();
        let mut widths: Vec<usize> = self.header.iter().map(|h| h.chars().count()).collect();
        for row in &cells {
            for (w, c) in widths.iter_mut().zip(row) {
                *w = (*w).max(c.chars().count());
            }
        }
        let line = |items: Vec<(String, bool)>| -> String {
            let parts: Vec<String> = items
                .into_iter()
                .zip(&widths)
                .map(
                    |((s, right), &w)| {
                        if right {
                            format!("{s:>w$}")
                        } else {
                            format!("{s:<w$}")
                        }
                    },
                )
                .collect();
            parts.join("  ").trim_end().to_string()
        };
        let mut out = line(self.header.iter().map(|h| (h.clone(), false)).collect());
        out.push('\n');
        out.push_str(&line(widths.iter().map(|w| ("-".repeat(*w), false)).collect()));
        out.push('\n');
        for (row, raw) in cells.into_iter().zip(&self.rows) {
            let items = row
                .into_iter()
                .zip(raw)
                .map(|(s, c)| (s, !matches!(c, Cell::Text(_))))
                .collect();
            out.push_str(&line(items));
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FileEntry {
    pub name: String,
    pub bytes: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub core_version: String,
    pub command: String,
    pub config_fingerprint: String,
    pub seed: u64,
    pub learner: String,
    pub statistic: String,
    pub notes: Vec<String>,
    pub files: Vec<FileEntry>,
    /// Wall-clock milliseconds; the only field that varies between reruns.
    pub timings_ms: Vec<(String, u128)>,
}

/// Files written by one command. Names are plain file names inside the output
/// directory; on failure everything written so far is removed.
#[derive(Debug)]
pub struct Output {
    dir: PathBuf,
    created_dir: bool,
    files: Vec<FileEntry>,
    started: Instant,
    timings: Vec<(String, u128)>,
    notes: Vec<String>,
}

impl Output {
    pub fn create(dir: &Path) -> Result<Self> {
        let created_dir = !dir.exists();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(Output {
            dir: dir.to_path_buf(),
            created_dir,
            files: Vec::new(),
            started: Instant::now(),
            timings: Vec::new(),
            notes: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        if name.is_empty() || name.contains(['/', '\\']) || name.starts_with('.') {
            return Err(Error::Invalid(format!(
                "output name `{name}` must be a plain file name"
            )));
        }
        let path = self.dir.join(name);
        std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        self.files.retain(|f| f.name != name);
        self.files.push(FileEntry {
            name: name.into(),
            bytes: bytes.len(),
            sha256: sha256_hex(bytes),
        });
        Ok(())
    }

    /// `stem.csv` and `stem.txt`.
    pub fn table(&mut self, stem: &str, table: &Table) -> Result<()> {
        self.write(&format!("{stem}.csv"), &table.to_csv()?)?;
        self.write(&format!("{stem}.txt"), table.to_text().as_bytes())
    }

    pub fn note(&mut self, note: impl Into<String>) {
        self.notes.push(note.into());
    }

    /// Records the time since the previous mark under `label`.
    pub fn mark(&mut self, label: &str) {
        let total: u128 = self.timings.iter().map(|t| t.1).sum();
        let now = self.started.elapsed().as_millis();
        self.timings.push((label.into(), now.saturating_sub(total)));
    }

    /// Writes `<command>.manifest.json` listing every file of this run.
    pub fn finish(mut self, mut manifest: Manifest) -> Result<PathBuf> {
        self.files.sort_by(|a, b| a.name.cmp(&b.name));
        manifest.files = std::mem::take(&mut self.files);
        manifest.notes = std::mem::take(&mut self.notes);
        self.mark("finish");
        manifest.timings_ms = std::mem::take(&mut self.timings);
        let path = self.dir.join(format!("{}.manifest.json", manifest.command));
        let text = serde_json::to_string_pretty(&manifest)?;
        std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    /// Removes everything this run wrote.
    pub fn discard(self) {
        for f in &self.files {
            let _ = std::fs::remove_file(self.dir.join(&f.name));
        }
        if self.created_dir {
            let _ = std::fs::remove_dir(&self.dir);
        }
    }
}
