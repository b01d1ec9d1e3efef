use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::HarnessError;

/// Optional output directory. All writers are no-ops when unset.
#[derive(Debug, Clone, Default)]
pub struct OutDir(Option<PathBuf>);

impl OutDir {
    pub fn none() -> Self {
        OutDir(None)
    }

    pub fn at(path: impl Into<PathBuf>) -> Result<Self, HarnessError> {
        let path = path.into();
        fs::create_dir_all(&path)?;
        Ok(OutDir(Some(path)))
    }

    pub fn path(&self, name: &str) -> Option<PathBuf> {
        self.0.as_ref().map(|d| d.join(name))
    }

    pub fn subdir(&self, name: &str) -> Result<Self, HarnessError> {
        match &self.0 {
            Some(d) => OutDir::at(d.join(name)),
            None => Ok(OutDir(None)),
        }
    }

    /// Creates or truncates `name`.
    pub fn reset(&self, name: &str) -> Result<(), HarnessError> {
        if let Some(p) = self.path(name) {
            File::create(p)?;
        }
        Ok(())
    }

    /// Appends one JSON object per line.
    pub fn append_jsonl<T: Serialize>(&self, name: &str, records: &[T]) -> Result<(), HarnessError> {
        if let Some(p) = self.path(name) {
            let f = OpenOptions::new().create(true).append(true).open(p)?;
            write_jsonl(BufWriter::new(f), records)?;
        }
        Ok(())
    }

    pub fn write_csv(
        &self,
        name: &str,
        header: &[&str],
        rows: &[Vec<String>],
    ) -> Result<(), HarnessError> {
        if let Some(p) = self.path(name) {
            write_csv_file(&p, header, rows)?;
        }
        Ok(())
    }
}

pub fn write_jsonl<W: Write, T: Serialize>(mut w: W, records: &[T]) -> Result<(), HarnessError> {
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(std::io::Error::other)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn write_csv_file(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Sample mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// `1 - (x - min) / (max - min)`: 1 for the best (lowest) value, 0 for the
/// worst. All ones when every value ties.
pub fn min_max_scores(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    values
        .iter()
        .map(|v| if span > 0.0 { 1.0 - (v - lo) / span } else { 1.0 })
        .collect()
}
