use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use nldiff_core::diagnostics::{MomentRow, MomentSeries};
use nldiff_core::domain::{Field, Grid};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

pub const HASH_PREFIX: &str = "# config_hash=";
pub const DIAG_FILE: &str = "diag.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

const DIAG_COLUMNS: [&str; 7] = ["t", "mass", "m1_plus", "m1_minus", "m1", "m2", "sup_norm"];

pub fn snapshot_file(t: f64) -> String {
    format!("snap_t{t}.csv")
}

/// Shortest round-trip text for a float.
pub fn num(v: f64) -> String {
    format!("{v:e}")
}

/// Writes files into one run directory and remembers what it wrote.
pub struct ArtifactWriter {
    dir: PathBuf,
    hash: String,
    written: Vec<PathBuf>,
}

impl ArtifactWriter {
    pub fn new(dir: &Path, hash: &str) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|source| CliError::Write { path: dir.to_path_buf(), source })?;
        Ok(Self { dir: dir.to_path_buf(), hash: hash.to_string(), written: Vec::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn put(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(|source| CliError::Write { path: path.clone(), source })?;
        if !self.written.contains(&path) {
            self.written.push(path);
        }
        Ok(())
    }

    /// Lists an existing file of the directory as part of this run.
    pub fn adopt(&mut self, name: &str) {
        let path = self.dir.join(name);
        if !self.written.contains(&path) {
            self.written.push(path);
        }
    }

    /// CSV with a hash comment line, a header row and numeric rows.
    pub fn csv(&mut self, name: &str, header: &[String], rows: impl IntoIterator<Item = Vec<f64>>) -> Result<()> {
        let mut buf = format!("{HASH_PREFIX}{}\n", self.hash).into_bytes();
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            let err = |e: csv::Error| CliError::Artifact { path: self.dir.join(name), reason: e.to_string() };
            w.write_record(header).map_err(err)?;
            for row in rows {
                w.write_record(row.iter().map(|v| num(*v))).map_err(err)?;
            }
            w.flush().map_err(|source| CliError::Write { path: self.dir.join(name), source })?;
        }
        self.put(name, &buf)
    }

    /// Pretty JSON; the config hash is added as a top-level field.
    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut v = serde_json::to_value(value).expect("reports always serialize");
        if let serde_json::Value::Object(map) = &mut v {
            map.insert("config_hash".into(), self.hash.clone().into());
        }
        let mut text = serde_json::to_string_pretty(&v).expect("reports always serialize");
        text.push('\n');
        self.put(name, text.as_bytes())
    }

    pub fn text(&mut self, name: &str, text: &str) -> Result<()> {
        self.put(name, text.as_bytes())
    }

    pub fn diagnostics(&mut self, series: &MomentSeries) -> Result<()> {
        let mut header: Vec<String> = DIAG_COLUMNS.iter().map(|s| s.to_string()).collect();
        header.extend(series.profile_names.iter().map(|n| format!("m_{n}")));
        let rows = series.rows.iter().map(|r| {
            let mut v = vec![r.t, r.mass, r.m1_plus, r.m1_minus, r.m1, r.m2, r.sup_norm];
            v.extend(&r.m_phi);
            v
        });
        self.csv(DIAG_FILE, &header, rows)
    }

    pub fn snapshot(&mut self, u: &Field) -> Result<()> {
        let header = vec!["x".to_string(), "u".to_string()];
        let rows = (0..u.len()).map(|i| vec![u.x(i), u.values()[i]]);
        self.csv(&snapshot_file(u.time()), &header, rows)
    }

    /// Inventory of everything written so far, with sizes and digests.
    pub fn inventory(&self) -> Result<Vec<FileEntry>> {
        let mut files: Vec<FileEntry> = self
            .written
            .iter()
            .map(|path| {
                let bytes = fs::read(path).map_err(|source| CliError::Read { path: path.clone(), source })?;
                let name = path.strip_prefix(&self.dir).unwrap_or(path).display().to_string();
                Ok(FileEntry { path: name, bytes: bytes.len() as u64, sha256: hex::encode(Sha256::digest(&bytes)) })
            })
            .collect::<Result<_>>()?;
        files.sort_by(|a, b| a.path.cmp(&b.path));
        Ok(files)
    }
}

/// Header and rows of a CSV written by [`ArtifactWriter::csv`], after
/// checking its hash line.
pub fn read_csv(path: &Path, hash: &str) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let bad = |reason: String| CliError::Artifact { path: path.to_path_buf(), reason };
    let file = fs::File::open(path).map_err(|source| CliError::Read { path: path.to_path_buf(), source })?;
    let mut reader = BufReader::new(file);
    let mut first = String::new();
    reader.read_line(&mut first).map_err(|source| CliError::Read { path: path.to_path_buf(), source })?;
    match first.trim_end().strip_prefix(HASH_PREFIX) {
        Some(found) if found == hash => {}
        Some(found) => return Err(bad(format!("config hash {found} does not match {hash}"))),
        None => return Err(bad("missing config hash line".into())),
    }
    let mut r = csv::Reader::from_reader(reader);
    let header = r.headers().map_err(|e| bad(e.to_string()))?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for record in r.records() {
        let record = record.map_err(|e| bad(e.to_string()))?;
        let row =
            record.iter().map(|s| s.parse::<f64>().map_err(|e| bad(format!("{s:?}: {e}")))).collect::<Result<_>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}

pub fn read_diagnostics(path: &Path, hash: &str) -> Result<MomentSeries> {
    let (header, rows) = read_csv(path, hash)?;
    let bad = |reason: String| CliError::Artifact { path: path.to_path_buf(), reason };
    if header.len() < DIAG_COLUMNS.len() || header[..DIAG_COLUMNS.len()] != DIAG_COLUMNS {
        return Err(bad(format!("unexpected columns {header:?}")));
    }
    let names = header[DIAG_COLUMNS.len()..]
        .iter()
        .map(|h| h.strip_prefix("m_").map(str::to_string).ok_or_else(|| bad(format!("unexpected column {h}"))))
        .collect::<Result<Vec<_>>>()?;
    let mut series = MomentSeries::new(names);
    for r in rows {
        if r.len() != header.len() {
            return Err(bad("ragged row".into()));
        }
        let row = MomentRow {
            t: r[0],
            mass: r[1],
            m1_plus: r[2],
            m1_minus: r[3],
            m1: r[4],
            m2: r[5],
            sup_norm: r[6],
            m_phi: r[7..].to_vec(),
        };
        series.push(row).map_err(|e| bad(e.to_string()))?;
    }
    Ok(series)
}

pub fn read_snapshot(path: &Path, hash: &str, grid: &Arc<Grid>, t: f64) -> Result<Field> {
    let (_, rows) = read_csv(path, hash)?;
    let bad = |reason: String| CliError::Artifact { path: path.to_path_buf(), reason };
    if rows.len() != grid.len() {
        return Err(bad(format!("{} rows for a grid of {} nodes", rows.len(), grid.len())));
    }
    for (i, r) in rows.iter().enumerate() {
        if r.len() != 2 || (r[0] - grid.x(i)).abs() > 1e-9 * grid.h() {
            return Err(bad(format!("row {i} does not sit on the grid")));
        }
    }
    Ok(Field::new(grid.clone(), rows.into_iter().map(|r| r[1]).collect(), t)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseRecord {
    pub name: String,
    /// `ran`, `reused` or `failed`.
    pub status: String,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub versions: BTreeMap<String, String>,
    pub deterministic: bool,
    pub phases: Vec<PhaseRecord>,
    pub files: Vec<FileEntry>,
    /// `pass`, `check-failure` or the error that aborted the run.
    pub outcome: String,
}

impl RunManifest {
    pub fn new(config_hash: &str, deterministic: bool) -> Self {
        let versions = BTreeMap::from([
            ("nldiff-cli".to_string(), env!("CARGO_PKG_VERSION").to_string()),
            ("nldiff-core".to_string(), nldiff_core::VERSION.to_string()),
        ]);
        Self {
            config_hash: config_hash.to_string(),
            versions,
            deterministic,
            phases: Vec::new(),
            files: Vec::new(),
            outcome: "pass".into(),
        }
    }

    pub fn phase(&self, name: &str) -> Option<&PhaseRecord> {
        self.phases.iter().find(|p| p.name == name)
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_FILE);
        let mut f = fs::File::create(&path).map_err(|source| CliError::Write { path: path.clone(), source })?;
        let text = serde_json::to_string_pretty(self).expect("manifests always serialize");
        writeln!(f, "{text}").map_err(|source| CliError::Write { path, source })
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|source| CliError::Read { path: path.clone(), source })?;
        serde_json::from_str(&text).map_err(|e| CliError::Artifact { path, reason: e.to_string() })
    }
}
