//! Run outputs: JSONL metrics stream, summary, CSV curves and manifest.

use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub fold: usize,
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub validation_accuracy: Option<f64>,
    pub validation_loss: Option<f64>,
    pub ltp_events: u64,
    pub ltd_events: u64,
    pub cumulative_events: u64,
    pub elapsed_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub test_subjects: Vec<u32>,
    pub train_trials: usize,
    pub test_trials: usize,
    /// Percent.
    pub test_accuracy: f64,
    pub test_loss: f64,
    pub events: u64,
    pub ties: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub regime: String,
    pub folds: Vec<FoldResult>,
    pub epochs: Vec<EpochRecord>,
    pub mean_test_accuracy: f64,
    /// Sample std across folds; 0 with a single fold.
    pub std_test_accuracy: f64,
    pub total_events: u64,
    pub wall_clock_s: f64,
}

pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

impl RunMetrics {
    pub fn summarize(regime: &str, folds: Vec<FoldResult>, epochs: Vec<EpochRecord>, wall_clock_s: f64) -> Self {
        let acc: Vec<f64> = folds.iter().map(|f| f.test_accuracy).collect();
        let (mean, std) = mean_std(&acc);
        Self {
            regime: regime.into(),
            total_events: folds.iter().map(|f| f.events).sum(),
            folds,
            epochs,
            mean_test_accuracy: mean,
            std_test_accuracy: std,
            wall_clock_s,
        }
    }
}

/// Append-only JSON-lines stream; each line is `{"kind": ..., ...record}`.
pub struct MetricsWriter {
    path: PathBuf,
    out: BufWriter<File>,
}

impl MetricsWriter {
    pub fn open(path: &Path, append: bool) -> Result<Self> {
        let file = OpenOptions::new()
            .create(true)
            .append(append)
            .write(true)
            .truncate(!append)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        Ok(Self { path: path.to_path_buf(), out: BufWriter::new(file) })
    }

    pub fn write<T: Serialize>(&mut self, kind: &str, record: &T) -> Result<()> {
        let mut v = serde_json::to_value(record)?;
        if let serde_json::Value::Object(m) = &mut v {
            m.insert("kind".into(), kind.into());
        }
        serde_json::to_writer(&mut self.out, &v)?;
        self.out.write_all(b"\n").map_err(|e| Error::io(&self.path, e))?;
        self.out.flush().map_err(|e| Error::io(&self.path, e))
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn write_rows<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Accuracy-vs-epoch, events-vs-epoch and accuracy-vs-events curves.
pub fn write_curves(dir: &Path, epochs: &[EpochRecord]) -> Result<()> {
    #[derive(Serialize)]
    struct Acc {
        fold: usize,
        epoch: usize,
        lr: f64,
        train_loss: f64,
        train_accuracy: f64,
        validation_accuracy: Option<f64>,
    }
    #[derive(Serialize)]
    struct Ev {
        fold: usize,
        epoch: usize,
        ltp_events: u64,
        ltd_events: u64,
        cumulative_events: u64,
    }
    #[derive(Serialize)]
    struct AccEv {
        fold: usize,
        cumulative_events: u64,
        train_accuracy: f64,
        validation_accuracy: Option<f64>,
    }
    write_rows(
        &dir.join("accuracy_vs_epoch.csv"),
        epochs.iter().map(|e| Acc {
            fold: e.fold,
            epoch: e.epoch,
            lr: e.lr,
            train_loss: e.train_loss,
            train_accuracy: e.train_accuracy,
            validation_accuracy: e.validation_accuracy,
        }),
    )?;
    write_rows(
        &dir.join("events_vs_epoch.csv"),
        epochs.iter().map(|e| Ev {
            fold: e.fold,
            epoch: e.epoch,
            ltp_events: e.ltp_events,
            ltd_events: e.ltd_events,
            cumulative_events: e.cumulative_events,
        }),
    )?;
    write_rows(
        &dir.join("accuracy_vs_events.csv"),
        epochs.iter().map(|e| AccEv {
            fold: e.fold,
            cumulative_events: e.cumulative_events,
            train_accuracy: e.train_accuracy,
            validation_accuracy: e.validation_accuracy,
        }),
    )
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub regime: String,
    pub version: String,
    pub seed: u64,
    pub dataset_digest: Option<String>,
    pub trials: Option<usize>,
    pub folds: Option<Vec<Vec<u32>>>,
    pub threads: usize,
    pub config: ExperimentConfig,
}

impl RunManifest {
    pub fn new(config: &ExperimentConfig) -> Self {
        Self {
            regime: config.regime.name().into(),
            version: env!("CARGO_PKG_VERSION").into(),
            seed: config.seed,
            dataset_digest: None,
            trials: None,
            folds: None,
            threads: rayon::current_num_threads(),
            config: config.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jsonl_lines_carry_kind() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.jsonl");
        let mut w = MetricsWriter::open(&p, false).unwrap();
        w.write("fold", &FoldResult { fold: 0, test_subjects: vec![1], train_trials: 2, test_trials: 3, test_accuracy: 50.0, test_loss: 0.7, events: 0, ties: 0 }).unwrap();
        drop(w);
        let mut w = MetricsWriter::open(&p, true).unwrap();
        w.write("note", &serde_json::json!({"x": 1})).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        let lines: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0]["kind"], "fold");
        assert_eq!(lines[1]["x"], 1);
    }

    #[test]
    fn mean_and_sample_std() {
        let (m, s) = mean_std(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(mean_std(&[4.0]), (4.0, 0.0));
    }
}
