use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::RunConfig;

pub fn provenance(command: &str, cfg: &RunConfig) -> Value {
    json!({ "command": command, "version": env!("CARGO_PKG_VERSION"), "config": cfg })
}

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

/// Line-delimited artifact led by a `_header` provenance record.
pub struct JsonlWriter {
    out: BufWriter<File>,
    path: String,
    records: usize,
}

impl JsonlWriter {
    pub fn create(path: &Path, command: &str, cfg: &RunConfig) -> Result<Self> {
        let mut out = create(path)?;
        serde_json::to_writer(&mut out, &json!({ ideaspace::HEADER_KEY: provenance(command, cfg) }))?;
        out.write_all(b"\n")?;
        Ok(JsonlWriter { out, path: path.display().to_string(), records: 0 })
    }

    pub fn write<T: Serialize>(&mut self, record: &T) -> Result<()> {
        serde_json::to_writer(&mut self.out, record)?;
        self.out.write_all(b"\n")?;
        self.records += 1;
        Ok(())
    }

    pub fn inner(&mut self) -> &mut BufWriter<File> {
        &mut self.out
    }

    pub fn finish(mut self) -> Result<usize> {
        self.out.flush().with_context(|| format!("writing {}", self.path))?;
        Ok(self.records)
    }
}

/// Single JSON document `{command, version, config, result}`.
pub fn write_json<T: Serialize>(path: &Path, command: &str, cfg: &RunConfig, result: &T) -> Result<()> {
    let mut doc = provenance(command, cfg);
    doc["result"] = serde_json::to_value(result)?;
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, &doc)?;
    out.write_all(b"\n")?;
    out.flush().with_context(|| format!("writing {}", path.display()))
}

pub fn read_json(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn read_records<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() || ideaspace::is_header_line(&line) {
            continue;
        }
        out.push(serde_json::from_str(&line).with_context(|| format!("{} line {}", path.display(), i + 1))?);
    }
    Ok(out)
}

/// One JSON record on standard output.
pub fn emit<T: Serialize>(record: &T) -> Result<()> {
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    serde_json::to_writer(&mut lock, record)?;
    lock.write_all(b"\n")?;
    Ok(())
}

/// Fixed-width text table.
pub fn table(headers: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = headers.iter().map(|h| h.len()).collect();
    for r in rows {
        for (w, cell) in widths.iter_mut().zip(r) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: Vec<&str>| {
        cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect::<Vec<_>>().join("  ").trim_end().to_string()
    };
    let mut s = line(headers.to_vec());
    s.push('\n');
    s.push_str(&line(widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().iter().map(String::as_str).collect()));
    for r in rows {
        s.push('\n');
        s.push_str(&line(r.iter().map(String::as_str).collect()));
    }
    s
}
