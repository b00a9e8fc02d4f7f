use std::ffi::OsString;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use serde_json::{json, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Done,
    NotConverged,
}

impl Status {
    pub fn from_converged(converged: bool) -> Self {
        if converged {
            Status::Done
        } else {
            Status::NotConverged
        }
    }

    pub fn and(self, other: Status) -> Status {
        if self == Status::Done {
            other
        } else {
            self
        }
    }
}

/// Plot-ready numeric table.
#[derive(Debug, Clone)]
pub struct Table {
    pub name: String,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(name: impl Into<String>, header: &[&'static str]) -> Self {
        Self { name: name.into(), header: header.to_vec(), rows: Vec::new() }
    }
}

/// Result of one analysis, before it is wrapped with its config.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub result: Value,
    pub converged: bool,
    pub tables: Vec<Table>,
}

/// `{command, config, result, metadata}`. Nothing run-dependent goes in
/// here beyond the config, so repeated runs give identical bytes.
pub fn envelope(command: &str, config: &impl Serialize, result: Value) -> Result<Value> {
    Ok(json!({
        "command": command,
        "config": serde_json::to_value(config)?,
        "result": result,
        "metadata": { "tool": "qemit", "version": env!("CARGO_PKG_VERSION") },
    }))
}

pub fn write_json(path: Option<&Path>, value: &Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()?;
            Ok(())
        }
    }
}

pub fn write_table(dir: &Path, prefix: &str, table: &Table) -> Result<PathBuf> {
    let path = dir.join(format!("{prefix}{}.csv", table.name));
    let mut w = csv::Writer::from_writer(create(&path)?);
    w.write_record(&table.header)?;
    for row in &table.rows {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(path)
}

/// Wraps an analysis, writes it and maps convergence onto the status.
pub fn emit(command: &str, config: &impl Serialize, output: Option<&Path>, analysis: Analysis) -> Result<Status> {
    write_json(output, &envelope(command, config, analysis.result)?)?;
    Ok(Status::from_converged(analysis.converged))
}

/// `<data file>.json`, the echo written next to generated data.
pub fn manifest_path(data: &Path) -> PathBuf {
    let mut s = OsString::from(data.as_os_str());
    s.push(".json");
    PathBuf::from(s)
}

pub fn require<'a>(path: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    match path {
        Some(p) => Ok(p),
        None => bail!("--{flag} is required (flag or config key `{flag}`)"),
    }
}

pub fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?))
}

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}
