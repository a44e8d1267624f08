use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::CliError;

/// Provenance stamped on every CSV as its first line.
#[derive(Debug, Clone)]
pub struct Stamp {
    pub experiment: String,
    pub config_hash: String,
    pub seed: u64,
}

impl Stamp {
    fn line(&self) -> String {
        format!(
            "# specguide {} experiment={} config_sha256={} seed={}\n",
            env!("CARGO_PKG_VERSION"),
            self.experiment,
            self.config_hash,
            self.seed
        )
    }
}

pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
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

    pub fn write(&self, dir: &Path, name: &str, stamp: &Stamp) -> Result<PathBuf, CliError> {
        let path = dir.join(name);
        let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", path.display()));
        let mut out = BufWriter::new(File::create(&path).map_err(io)?);
        out.write_all(stamp.line().as_bytes()).map_err(io)?;
        let mut w = csv::Writer::from_writer(out);
        let csv_err = |e: csv::Error| CliError::Io(format!("{}: {e}", path.display()));
        w.write_record(&self.header).map_err(csv_err)?;
        for r in &self.rows {
            w.write_record(r).map_err(csv_err)?;
        }
        w.flush().map_err(io)?;
        Ok(path)
    }
}

/// Shortest round-trip formatting, so reruns produce identical bytes.
pub fn num(v: f64) -> String {
    format!("{v:?}")
}
