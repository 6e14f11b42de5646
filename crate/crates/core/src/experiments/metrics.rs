//! CSV outputs. Every file starts with a `# schema=1` comment line.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

pub const SCHEMA_LINE: &str = "# schema=1";

#[derive(Clone, Debug, PartialEq)]
pub struct MetricRow {
    pub epoch: usize,
    pub samples_seen: u64,
    /// Running mean of the clean loss since the previous row.
    pub train_loss: f64,
    pub test_accuracy: f64,
    /// Mean applied ‖ΔW‖_F per layer since the previous row.
    pub dw_norms: Vec<f64>,
    /// Mean removed rank per layer since the previous row.
    pub ranks: Vec<f64>,
}

/// Appends rows to a CSV file, flushing after each so that an aborted run
/// keeps what it logged.
pub struct CsvWriter {
    path: PathBuf,
    out: BufWriter<File>,
    columns: usize,
}

impl CsvWriter {
    pub fn create(path: &Path, header: &[String]) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = Self {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
            columns: header.len(),
        };
        w.line(&format!("{SCHEMA_LINE}\n{}\n", header.join(",")))?;
        Ok(w)
    }

    fn line(&mut self, text: &str) -> Result<()> {
        self.out
            .write_all(text.as_bytes())
            .and_then(|_| self.out.flush())
            .map_err(|e| Error::io(&self.path, e))
    }

    pub fn row(&mut self, fields: &[String]) -> Result<()> {
        if fields.len() != self.columns {
            return Err(Error::Shape(format!(
                "{} fields for {} columns in {}",
                fields.len(),
                self.columns,
                self.path.display()
            )));
        }
        self.line(&format!("{}\n", fields.join(",")))
    }
}

pub fn metrics_header(weight_layers: usize) -> Vec<String> {
    let mut h: Vec<String> = ["epoch", "samples_seen", "train_loss", "test_accuracy"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    h.extend((1..=weight_layers).map(|l| format!("dw_norm_l{l}")));
    h.extend((1..=weight_layers).map(|l| format!("rank_s_l{l}")));
    h
}

pub fn metric_fields(row: &MetricRow) -> Vec<String> {
    let mut f = vec![
        row.epoch.to_string(),
        row.samples_seen.to_string(),
        row.train_loss.to_string(),
        row.test_accuracy.to_string(),
    ];
    f.extend(row.dw_norms.iter().map(|v| v.to_string()));
    f.extend(row.ranks.iter().map(|v| v.to_string()));
    f
}

/// Reads a schema-1 CSV back into its header and rows.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    if lines.next() != Some(SCHEMA_LINE) {
        return Err(Error::format(path.display().to_string(), "missing schema line"));
    }
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| Error::format(path.display().to_string(), "missing header"))?
        .split(',')
        .map(str::to_string)
        .collect();
    let rows = lines.map(|l| l.split(',').map(str::to_string).collect()).collect();
    Ok((header, rows))
}
