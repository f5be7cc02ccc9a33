//! Per-epoch training records, written as line-delimited JSON, and the CSV summary table.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub stage: u8,
    pub epoch: usize,
    pub config_hash: String,
    /// Mean loss per component over the epoch's mini-batches.
    pub losses: BTreeMap<String, f64>,
    pub pseudo_label_accuracy: Option<f64>,
    pub target_accuracy: Option<f64>,
    pub wall_time_s: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct StageReport {
    pub records: Vec<EpochRecord>,
}

impl StageReport {
    /// Appends a record; epochs must increase.
    pub fn push(&mut self, record: EpochRecord) -> Result<()> {
        if let Some(last) = self.records.last() {
            if record.epoch <= last.epoch {
                return Err(Error::validation(format!(
                    "epoch {} recorded after epoch {}",
                    record.epoch, last.epoch
                )));
            }
        }
        self.records.push(record);
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }

    /// Loss values in record order, component by component; wall time excluded.
    pub fn loss_trace(&self) -> Vec<(usize, String, f64)> {
        self.records
            .iter()
            .flat_map(|r| r.losses.iter().map(move |(k, v)| (r.epoch, k.clone(), *v)))
            .collect()
    }

    pub fn pseudo_label_curve(&self) -> Vec<Option<f64>> {
        self.records
            .iter()
            .map(|r| r.pseudo_label_accuracy)
            .collect()
    }

    pub fn target_accuracy_curve(&self) -> Vec<Option<f64>> {
        self.records.iter().map(|r| r.target_accuracy).collect()
    }

    pub fn write_jsonl(&self, mut w: impl Write) -> Result<()> {
        for r in &self.records {
            writeln!(w, "{}", serde_json::to_string(r)?)
                .map_err(|e| Error::io("<report stream>", e))?;
        }
        Ok(())
    }

    pub fn read_jsonl(r: impl BufRead) -> Result<Self> {
        let mut report = StageReport::default();
        for line in r.lines() {
            let line = line.map_err(|e| Error::io("<report stream>", e))?;
            if !line.trim().is_empty() {
                report.push(serde_json::from_str(&line)?)?;
            }
        }
        Ok(report)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf)?;
        fs::write(path, buf).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_jsonl(BufReader::new(f))
    }
}

/// One row of the final summary table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub model: String,
    pub domain: String,
    pub accuracy: f64,
    pub config_hash: String,
}

pub fn write_summary_csv(rows: &[SummaryRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Parse {
        context: format!("summary {}", path.display()),
        message: e.to_string(),
    })?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::Parse {
            context: "summary row".into(),
            message: e.to_string(),
        })?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
