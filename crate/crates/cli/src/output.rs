//! CSV tables and JSON documents, written to a file or standard output.

use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

/// Seventeen significant digits, enough to round-trip any double.
pub fn real(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn int(n: usize) -> String {
    n.to_string()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn with_header(header: Vec<String>) -> Self {
        Self { header, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write_to(&self, sink: impl Write) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(sink);
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Destination of a single document: a path or standard output.
pub fn open(out: Option<&Path>) -> Result<Box<dyn Write>> {
    match out {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
            }
            let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
            Ok(Box::new(io::BufWriter::new(file)))
        }
        None => Ok(Box::new(io::stdout().lock())),
    }
}

pub fn write_table(table: &Table, out: Option<&Path>) -> Result<()> {
    table.write_to(open(out)?)
}

pub fn write_json(value: &serde_json::Value, out: Option<&Path>) -> Result<()> {
    let mut sink = open(out)?;
    serde_json::to_writer(&mut sink, value)?;
    sink.write_all(b"\n")?;
    sink.flush()?;
    Ok(())
}

/// Collects the files of a multi-file run under one directory.
pub struct Bundle {
    dir: PathBuf,
    pub written: Vec<PathBuf>,
}

impl Bundle {
    pub fn new(dir: PathBuf) -> Result<Self> {
        std::fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display()))?;
        Ok(Self { dir, written: Vec::new() })
    }

    pub fn table(&mut self, name: &str, table: &Table) -> Result<()> {
        let path = self.dir.join(name);
        write_table(table, Some(&path))?;
        self.written.push(path);
        Ok(())
    }

    pub fn json(&mut self, name: &str, value: &serde_json::Value) -> Result<()> {
        let path = self.dir.join(name);
        write_json(value, Some(&path))?;
        self.written.push(path);
        Ok(())
    }
}
