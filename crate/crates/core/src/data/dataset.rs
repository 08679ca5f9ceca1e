use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::mask::SENTINEL;
use super::synthetic::SyntheticParams;
use crate::error::{Error, Result};
use crate::layout::ModalityLayout;
use crate::nn::{Matrix, RngState};

/// Per-column affine map between raw values and `[-1, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl NormalizationStats {
    pub fn fit(raw: &Matrix, layout: &ModalityLayout) -> Result<Self> {
        if raw.cols() != layout.total_dim() {
            return Err(Error::Ingestion(format!(
                "expected {} columns, got {}",
                layout.total_dim(),
                raw.cols()
            )));
        }
        if raw.rows() == 0 {
            return Err(Error::Ingestion("no rows".into()));
        }
        let names = layout.column_names();
        let mut min = vec![f64::INFINITY; raw.cols()];
        let mut max = vec![f64::NEG_INFINITY; raw.cols()];
        for r in 0..raw.rows() {
            for (c, &v) in raw.row(r).iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::Ingestion(format!(
                        "non-finite value in column {} row {r}",
                        names[c]
                    )));
                }
                min[c] = min[c].min(v);
                max[c] = max[c].max(v);
            }
        }
        for c in 0..raw.cols() {
            if max[c] <= min[c] {
                return Err(Error::Ingestion(format!(
                    "column {} is constant ({}); cannot normalize",
                    names[c], min[c]
                )));
            }
        }
        Ok(Self { min, max })
    }

    pub fn normalize_row(&self, raw: &[f64], out: &mut [f64]) {
        for (c, (o, v)) in out.iter_mut().zip(raw).enumerate() {
            *o = 2.0 * (v - self.min[c]) / (self.max[c] - self.min[c]) - 1.0;
        }
    }

    pub fn denormalize_row(&self, norm: &[f64], out: &mut [f64]) {
        for (c, (o, v)) in out.iter_mut().zip(norm).enumerate() {
            *o = self.min[c] + (v + 1.0) * 0.5 * (self.max[c] - self.min[c]);
        }
    }

    pub fn normalize(&self, raw: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(raw.rows(), raw.cols());
        for r in 0..raw.rows() {
            self.normalize_row(raw.row(r), out.row_mut(r));
        }
        out
    }

    pub fn denormalize(&self, norm: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(norm.rows(), norm.cols());
        for r in 0..norm.rows() {
            self.denormalize_row(norm.row(r), out.row_mut(r));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase")]
pub enum Provenance {
    Synthetic { seed: u64, params: SyntheticParams },
    Csv { path: PathBuf },
    Subset { parent: Box<Provenance>, seed: u64 },
}

/// Fully observed, normalized sample vectors (one per row).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    layout: ModalityLayout,
    samples: Matrix,
    stats: NormalizationStats,
    provenance: Provenance,
}

impl Dataset {
    /// Normalizes `raw` column-wise onto `[-1, 1]` with statistics fitted on `raw`.
    pub fn normalize(raw: &Matrix, layout: ModalityLayout, provenance: Provenance) -> Result<Self> {
        let stats = NormalizationStats::fit(raw, &layout)?;
        Self::with_stats(raw, layout, stats, provenance)
    }

    /// Normalizes `raw` with externally supplied statistics, e.g. from a training set.
    /// Values outside the fitted range are clipped to `[-1, 1]`.
    pub fn with_stats(
        raw: &Matrix,
        layout: ModalityLayout,
        stats: NormalizationStats,
        provenance: Provenance,
    ) -> Result<Self> {
        if raw.cols() != layout.total_dim() || stats.min.len() != raw.cols() {
            return Err(Error::Ingestion("column count does not match layout".into()));
        }
        let mut samples = stats.normalize(raw);
        samples.map_inplace(|v| v.clamp(-1.0, 1.0));
        Ok(Self {
            layout,
            samples,
            stats,
            provenance,
        })
    }

    pub fn layout(&self) -> &ModalityLayout {
        &self.layout
    }

    pub fn len(&self) -> usize {
        self.samples.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.rows() == 0
    }

    pub fn samples(&self) -> &Matrix {
        &self.samples
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        self.samples.row(i)
    }

    pub fn stats(&self) -> &NormalizationStats {
        &self.stats
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    /// Raw-scale values reconstructed from the normalized samples.
    pub fn denormalized(&self) -> Matrix {
        self.stats.denormalize(&self.samples)
    }

    /// `size` distinct rows chosen by `seed`, in ascending row order.
    /// Returns the whole dataset when `size` equals its length.
    pub fn subset(&self, size: usize, seed: u64) -> Result<Dataset> {
        if size == 0 || size > self.len() {
            return Err(Error::Usage(format!(
                "cannot draw {size} samples from a dataset of {}",
                self.len()
            )));
        }
        let mut idx: Vec<usize> = (0..self.len()).collect();
        if size < self.len() {
            RngState::new(seed).shuffle(&mut idx);
            idx.truncate(size);
            idx.sort_unstable();
        }
        let rows: Vec<&[f64]> = idx.iter().map(|&i| self.sample(i)).collect();
        Ok(Dataset {
            layout: self.layout.clone(),
            samples: Matrix::from_rows(&rows),
            stats: self.stats.clone(),
            provenance: Provenance::Subset {
                parent: Box::new(self.provenance.clone()),
                seed,
            },
        })
    }

    /// Checks the stored invariants: values in range, no sentinel entries.
    pub fn validate(&self) -> Result<()> {
        for (i, v) in self.samples.as_slice().iter().enumerate() {
            if *v == SENTINEL || !(-1.0..=1.0).contains(v) {
                return Err(Error::Input(format!(
                    "sample {} column {} holds {v}, outside [-1, 1]",
                    i / self.samples.cols(),
                    i % self.samples.cols()
                )));
            }
        }
        Ok(())
    }
}

/// Reads a raw-valued dataset CSV whose header must match the layout's column
/// names. Rows with missing or unparsable fields are rejected.
pub fn read_raw_csv<R: Read>(reader: R, layout: &ModalityLayout) -> Result<Matrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let expected = layout.column_names();
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if header != expected {
        return Err(Error::Ingestion(format!(
            "header mismatch: expected {} columns starting {:?}, got {:?}",
            expected.len(),
            &expected[..expected.len().min(3)],
            &header[..header.len().min(3)]
        )));
    }
    let mut data = Vec::new();
    let mut rows = 0;
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != expected.len() {
            return Err(Error::Ingestion(format!(
                "row {} has {} fields, expected {}",
                line + 1,
                rec.len(),
                expected.len()
            )));
        }
        for (c, field) in rec.iter().enumerate() {
            let field = field.trim();
            if field.is_empty() {
                return Err(Error::Ingestion(format!(
                    "row {} is missing {}",
                    line + 1,
                    expected[c]
                )));
            }
            let v: f64 = field.parse().map_err(|_| {
                Error::Ingestion(format!(
                    "row {} column {}: cannot parse {field:?}",
                    line + 1,
                    expected[c]
                ))
            })?;
            data.push(v);
        }
        rows += 1;
    }
    Ok(Matrix::from_vec(rows, expected.len(), data))
}

pub fn write_raw_csv<W: Write>(raw: &Matrix, layout: &ModalityLayout, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(layout.column_names())?;
    for r in 0..raw.rows() {
        w.write_record(raw.row(r).iter().map(|v| v.to_string()))?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

/// Loads and normalizes a dataset CSV from disk.
pub fn load_csv(path: &Path, layout: ModalityLayout) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let raw = read_raw_csv(file, &layout)?;
    Dataset::normalize(
        &raw,
        layout,
        Provenance::Csv {
            path: path.to_path_buf(),
        },
    )
}
