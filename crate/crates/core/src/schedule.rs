//! Epoch-indexed KL weights.
//!
//! * `constant1`: beta = 1 throughout.
//! * `constant0`: linear ramp from 1 to 0 over the warm-up, then 0.
//! * `dyn_plateau0` / `dyn_plateau1`: cycles of `cycle_length` epochs, each
//!   starting at beta = 1 and descending linearly to 0 over `d(k)` epochs,
//!   `d(k) = max(min_descent, round(cycle_length * (1 - k / K)))` with
//!   `K = floor(tail_start / cycle_length)`, so the zero plateau grows from
//!   cycle to cycle. From `tail_start` on, beta is held at 0 or 1.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ScheduleKind {
    #[serde(rename = "constant1")]
    Constant1,
    #[serde(rename = "constant0")]
    Constant0,
    #[serde(rename = "dyn_plateau0")]
    DynPlateau0,
    #[serde(rename = "dyn_plateau1")]
    DynPlateau1,
}

impl ScheduleKind {
    pub const ALL: [ScheduleKind; 4] = [
        ScheduleKind::Constant1,
        ScheduleKind::Constant0,
        ScheduleKind::DynPlateau0,
        ScheduleKind::DynPlateau1,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScheduleKind::Constant1 => "constant1",
            ScheduleKind::Constant0 => "constant0",
            ScheduleKind::DynPlateau0 => "dyn_plateau0",
            ScheduleKind::DynPlateau1 => "dyn_plateau1",
        }
    }

    pub fn is_dynamic(self) -> bool {
        matches!(self, ScheduleKind::DynPlateau0 | ScheduleKind::DynPlateau1)
    }
}

impl fmt::Display for ScheduleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScheduleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ScheduleKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Usage(format!("unknown schedule {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BetaSchedule {
    pub kind: ScheduleKind,
    pub total_epochs: usize,
    /// Ramp length of `constant0`.
    #[serde(default = "default_warmup")]
    pub warmup_epochs: usize,
    /// Distance between consecutive beta = 1 epochs of the dynamic kinds.
    #[serde(default = "default_cycle")]
    pub cycle_length: usize,
    /// First epoch of the constant tail of the dynamic kinds.
    pub tail_start: usize,
    /// Shortest descent of the dynamic kinds.
    #[serde(default = "default_min_descent")]
    pub min_descent: usize,
}

fn default_warmup() -> usize {
    1000
}

fn default_cycle() -> usize {
    80
}

fn default_min_descent() -> usize {
    4
}

impl BetaSchedule {
    /// Defaults for a run of `total_epochs`: warm-up 1000, cycle 80, tail over
    /// the last eighth.
    pub fn new(kind: ScheduleKind, total_epochs: usize) -> Self {
        Self {
            kind,
            total_epochs,
            warmup_epochs: default_warmup(),
            cycle_length: default_cycle(),
            tail_start: total_epochs - total_epochs / 8,
            min_descent: default_min_descent(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.total_epochs == 0 {
            return Err(Error::Config("total_epochs must be at least 1".into()));
        }
        if self.cycle_length == 0 || self.warmup_epochs == 0 {
            return Err(Error::Config("cycle_length and warmup_epochs must be positive".into()));
        }
        if self.min_descent == 0 || self.min_descent > self.cycle_length {
            return Err(Error::Config(format!(
                "min_descent must be in 1..={}",
                self.cycle_length
            )));
        }
        if self.tail_start > self.total_epochs {
            return Err(Error::Config(format!(
                "tail_start {} exceeds total_epochs {}",
                self.tail_start, self.total_epochs
            )));
        }
        Ok(())
    }

    /// Descent length `d(k)` of cycle `k`.
    pub fn descent_length(&self, cycle: usize) -> usize {
        let full_cycles = (self.tail_start / self.cycle_length).max(1) as f64;
        let raw = (self.cycle_length as f64 * (1.0 - cycle as f64 / full_cycles)).round();
        (raw.max(0.0) as usize).max(self.min_descent)
    }

    pub fn beta_at(&self, epoch: usize) -> Result<f64> {
        if epoch >= self.total_epochs {
            return Err(Error::Usage(format!(
                "epoch {epoch} outside schedule of {} epochs",
                self.total_epochs
            )));
        }
        Ok(match self.kind {
            ScheduleKind::Constant1 => 1.0,
            ScheduleKind::Constant0 => {
                if epoch < self.warmup_epochs {
                    1.0 - epoch as f64 / self.warmup_epochs as f64
                } else {
                    0.0
                }
            }
            ScheduleKind::DynPlateau0 | ScheduleKind::DynPlateau1 => {
                if epoch >= self.tail_start {
                    if self.kind == ScheduleKind::DynPlateau1 {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    let cycle = epoch / self.cycle_length;
                    let pos = epoch % self.cycle_length;
                    let d = self.descent_length(cycle);
                    if pos < d {
                        1.0 - pos as f64 / d as f64
                    } else {
                        0.0
                    }
                }
            }
        })
    }

    /// `(epoch, beta)` at epochs `0, stride, 2 * stride, ...`.
    pub fn table(&self, stride: usize) -> Result<Vec<(usize, f64)>> {
        if stride == 0 {
            return Err(Error::Usage("stride must be at least 1".into()));
        }
        (0..self.total_epochs)
            .step_by(stride)
            .map(|e| Ok((e, self.beta_at(e)?)))
            .collect()
    }

    /// Writes [`Self::table`] as `epoch,beta` CSV.
    pub fn write_table_csv<W: Write>(&self, stride: usize, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["epoch", "beta"])?;
        for (e, b) in self.table(stride)? {
            w.write_record([e.to_string(), b.to_string()])?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}
