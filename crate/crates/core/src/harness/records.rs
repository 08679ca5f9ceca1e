use std::fs;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::train::EpochStats;
use crate::error::{Error, Result};
use crate::layout::Modality;
use crate::measures::{MeasureFamily, MeasureReport, Scope};
use crate::schedule::ScheduleKind;

/// One row of `metrics.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub epoch: usize,
    pub schedule: ScheduleKind,
    pub run_seed: u64,
    pub beta: f64,
    pub reconstruction_loss: f64,
    pub latent_loss: f64,
    pub total_loss: f64,
    pub prediction_error: f64,
}

impl MetricsRow {
    pub fn new(schedule: ScheduleKind, run_seed: u64, stats: &EpochStats, prediction_error: f64) -> Self {
        Self {
            epoch: stats.epoch,
            schedule,
            run_seed,
            beta: stats.beta,
            reconstruction_loss: stats.reconstruction_loss,
            latent_loss: stats.latent_loss,
            total_loss: stats.total_loss,
            prediction_error,
        }
    }

    /// Named numeric columns, for aggregation and plotting.
    pub fn values(&self) -> [(&'static str, f64); 5] {
        [
            ("beta", self.beta),
            ("reconstruction_loss", self.reconstruction_loss),
            ("latent_loss", self.latent_loss),
            ("total_loss", self.total_loss),
            ("prediction_error", self.prediction_error),
        ]
    }
}

/// One row of `measures.csv`; `modality` is empty for the baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureRow {
    pub epoch: usize,
    pub schedule: ScheduleKind,
    pub run_seed: u64,
    pub measure: MeasureFamily,
    pub scope: Scope,
    pub modality: Option<Modality>,
    pub value: f64,
}

impl MeasureRow {
    pub fn from_report(schedule: ScheduleKind, run_seed: u64, report: &MeasureReport) -> Vec<Self> {
        let row = |measure, scope, modality, value| MeasureRow {
            epoch: report.epoch,
            schedule,
            run_seed,
            measure,
            scope,
            modality,
            value,
        };
        let mut out = Vec::with_capacity(4 * report.modalities.len() + 1);
        for mm in &report.modalities {
            for family in [MeasureFamily::SingleModalityError, MeasureFamily::LossOfPrecision] {
                for scope in [Scope::Modality, Scope::All] {
                    let v = mm.get(family, scope).expect("modality measure");
                    out.push(row(family, scope, Some(mm.modality), v));
                }
            }
        }
        out.push(row(MeasureFamily::Baseline, Scope::All, None, report.baseline));
        out
    }

    /// Series key without epoch and run: `(measure, scope, modality)`.
    pub fn key(&self) -> MeasureKey {
        MeasureKey {
            measure: self.measure,
            scope: self.scope,
            modality: self.modality,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MeasureKey {
    pub measure: MeasureFamily,
    pub scope: Scope,
    pub modality: Option<Modality>,
}

impl MeasureKey {
    pub fn label(&self) -> String {
        match self.modality {
            Some(m) => format!("{}_{}_{m}", self.measure.name(), self.scope.name()),
            None => self.measure.name().to_string(),
        }
    }
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv_to(file, rows)
}

pub fn write_csv_to<T: Serialize, W: Write>(out: W, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(Path::new("<csv output>"), e))
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}
