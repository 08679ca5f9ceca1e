use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::data::SyntheticParams;
use crate::error::{Error, Result};
use crate::measures::DEFAULT_EVAL_SIZE;
use crate::model::DEFAULT_HIDDEN;
use crate::nn::AdamConfig;
use crate::schedule::{BetaSchedule, ScheduleKind};

/// Environment variable naming the default output root.
pub const OUTPUT_ROOT_ENV: &str = "MMVAE_OUTPUT_ROOT";

/// Where the evaluation set is drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalSource {
    /// A seeded subset of the training samples.
    TrainSubset,
    /// Freshly generated samples normalized with the training statistics.
    Fresh,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub total_epochs: usize,
    pub runs: usize,
    pub base_seed: u64,
    pub schedules: Vec<ScheduleKind>,
    pub warmup_epochs: usize,
    pub cycle_length: usize,
    /// Defaults to `total_epochs - total_epochs / 8`.
    pub tail_start: Option<usize>,
    pub min_descent: usize,

    /// Raw CSV to train on; the synthetic generator is used when absent.
    pub dataset: Option<PathBuf>,
    pub data_seed: u64,
    pub n_samples: usize,
    pub generator: SyntheticParams,

    pub hidden: usize,
    pub batch_size: usize,
    pub optimizer: AdamConfig,

    pub eval_size: usize,
    pub eval_source: EvalSource,
    pub eval_seed: u64,
    /// Measures are computed every this many completed epochs.
    pub eval_every: usize,
    pub checkpoint_every: usize,

    /// Worker threads for independent runs.
    pub threads: usize,
    /// Train the epochs the two dynamic schedules have in common once and
    /// branch at the tail. Outputs are identical to separate runs.
    pub share_prefix: bool,
    pub output_root: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            total_epochs: 80_000,
            runs: 20,
            base_seed: 0,
            schedules: ScheduleKind::ALL.to_vec(),
            warmup_epochs: 1000,
            cycle_length: 80,
            tail_start: None,
            min_descent: 4,
            dataset: None,
            data_seed: 0,
            n_samples: 2000,
            generator: SyntheticParams::default(),
            hidden: DEFAULT_HIDDEN,
            batch_size: 64,
            optimizer: AdamConfig::default(),
            eval_size: DEFAULT_EVAL_SIZE,
            eval_source: EvalSource::TrainSubset,
            eval_seed: 1,
            eval_every: 40,
            checkpoint_every: 1000,
            threads: 1,
            share_prefix: true,
            output_root: None,
        }
    }
}

impl RunConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }

    /// Applies `key=value` overrides; dotted keys reach nested fields
    /// (`generator.noise=0.02`). Values are parsed as JSON, falling back to a
    /// plain string.
    pub fn with_overrides<S: AsRef<str>>(self, overrides: &[S]) -> Result<Self> {
        let mut doc = serde_json::to_value(&self)?;
        for item in overrides {
            let item = item.as_ref().trim_start_matches("--");
            let (key, raw) = item
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override {item:?} is not key=value")))?;
            let value: Value =
                serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
            let mut slot = &mut doc;
            for part in key.split('.') {
                slot = slot
                    .as_object_mut()
                    .and_then(|o| o.get_mut(part))
                    .ok_or_else(|| Error::Config(format!("unknown config key {key:?}")))?;
            }
            *slot = value;
        }
        serde_json::from_value(doc).map_err(|e| Error::Config(format!("invalid override: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("total_epochs", self.total_epochs),
            ("runs", self.runs),
            ("n_samples", self.n_samples),
            ("hidden", self.hidden),
            ("batch_size", self.batch_size),
            ("eval_size", self.eval_size),
            ("eval_every", self.eval_every),
            ("checkpoint_every", self.checkpoint_every),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be at least 1")));
        }
        if self.total_epochs % self.eval_every != 0 {
            return Err(Error::Config(format!(
                "eval_every {} does not divide total_epochs {}",
                self.eval_every, self.total_epochs
            )));
        }
        if self.schedules.is_empty() {
            return Err(Error::Config("no schedules selected".into()));
        }
        if self.eval_source == EvalSource::TrainSubset
            && self.dataset.is_none()
            && self.eval_size > self.n_samples
        {
            return Err(Error::Config(format!(
                "eval_size {} exceeds n_samples {}",
                self.eval_size, self.n_samples
            )));
        }
        let o = &self.optimizer;
        if !(o.lr > 0.0 && (0.0..1.0).contains(&o.beta1) && (0.0..1.0).contains(&o.beta2) && o.eps > 0.0)
        {
            return Err(Error::Config(format!("invalid optimizer settings {o:?}")));
        }
        self.generator.validate()?;
        for &kind in &self.schedules {
            self.schedule(kind).validate()?;
        }
        Ok(())
    }

    pub fn tail_start(&self) -> usize {
        self.tail_start
            .unwrap_or(self.total_epochs - self.total_epochs / 8)
    }

    pub fn schedule(&self, kind: ScheduleKind) -> BetaSchedule {
        BetaSchedule {
            kind,
            total_epochs: self.total_epochs,
            warmup_epochs: self.warmup_epochs,
            cycle_length: self.cycle_length,
            tail_start: self.tail_start(),
            min_descent: self.min_descent,
        }
    }

    pub fn run_seed(&self, run: usize) -> u64 {
        self.base_seed + run as u64
    }

    /// Explicit root, else `$MMVAE_OUTPUT_ROOT`, else `./runs`.
    pub fn resolved_output_root(&self) -> PathBuf {
        self.output_root
            .clone()
            .or_else(|| std::env::var_os(OUTPUT_ROOT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("runs"))
    }

    /// SHA-256 of the canonical JSON form, ignoring settings that do not
    /// change any output value (output location, thread count).
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_root = None;
        c.threads = 1;
        let text = serde_json::to_string(&c).expect("config serializes");
        Sha256::digest(text.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = RunConfig::default();
        c.validate().unwrap();
        assert_eq!(c.tail_start(), 70_000);
        assert_eq!(c.schedule(ScheduleKind::DynPlateau0), BetaSchedule::new(ScheduleKind::DynPlateau0, 80_000));
    }

    #[test]
    fn overrides_reach_nested_fields() {
        let c = RunConfig::default()
            .with_overrides(&[
                "--total_epochs=16",
                "generator.noise=0.02",
                "--schedules=[\"constant0\"]",
                "eval_source=fresh",
                "tail_start=12",
            ])
            .unwrap();
        assert_eq!(c.total_epochs, 16);
        assert_eq!(c.generator.noise, 0.02);
        assert_eq!(c.schedules, vec![ScheduleKind::Constant0]);
        assert_eq!(c.eval_source, EvalSource::Fresh);
        assert_eq!(c.tail_start(), 12);
    }

    #[test]
    fn unknown_keys_are_config_errors() {
        assert!(matches!(
            RunConfig::default().with_overrides(&["epochs=3"]),
            Err(Error::Config(_))
        ));
        assert!(RunConfig::from_json_str(r#"{"bogus": 1}"#).is_err());
        assert!(RunConfig::default().with_overrides(&["total_epochs"]).is_err());
    }

    #[test]
    fn partial_json_fills_defaults() {
        let c = RunConfig::from_json_str(r#"{"runs": 2, "generator": {"dt": 0.05}}"#).unwrap();
        assert_eq!(c.runs, 2);
        assert_eq!(c.generator.dt, 0.05);
        assert_eq!(c.generator.noise, SyntheticParams::default().noise);
    }

    #[test]
    fn hash_ignores_output_root() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.output_root = Some("/elsewhere".into());
        assert_eq!(a.hash(), b.hash());
        let c = a.clone().with_overrides(&["runs=7"]).unwrap();
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn validation_catches_bad_values() {
        for o in ["eval_every=300", "total_epochs=100", "batch_size=0", "eval_size=5000", "tail_start=90000", "optimizer.lr=0"] {
            let c = RunConfig::default().with_overrides(&[o]).unwrap();
            assert!(c.validate().is_err(), "{o}");
        }
    }
}
