use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{EvalSource, RunConfig};
use super::records::{write_csv, MeasureRow, MetricsRow};
use crate::checkpoint::Checkpoint;
use crate::data::{augment, generate_raw, generate_synthetic, load_csv, Dataset, Provenance};
use crate::error::{Error, Result};
use crate::layout::ModalityLayout;
use crate::measures::MeasureEvaluator;
use crate::model::MultimodalVae;
use crate::nn::{Adam, Matrix, RngState};
use crate::schedule::{BetaSchedule, ScheduleKind};

/// Training data and the evaluation set shared by every run of an experiment.
#[derive(Debug, Clone)]
pub struct RunData {
    pub train: Dataset,
    pub eval: Dataset,
}

impl RunData {
    pub fn prepare(config: &RunConfig) -> Result<Self> {
        let layout = ModalityLayout::standard();
        let train = match &config.dataset {
            Some(path) => load_csv(path, layout.clone())?,
            None => generate_synthetic(config.data_seed, config.n_samples, &config.generator)?,
        };
        let eval = match config.eval_source {
            EvalSource::TrainSubset => train.subset(config.eval_size, config.eval_seed)?,
            EvalSource::Fresh => {
                if config.dataset.is_some() {
                    return Err(Error::Config(
                        "eval_source=fresh needs the synthetic generator".into(),
                    ));
                }
                // Independent episodes, scaled with the training statistics.
                let seed = config.eval_seed.wrapping_add(0x9e37_79b9_7f4a_7c15);
                let raw = generate_raw(seed, config.eval_size, &config.generator)?;
                Dataset::with_stats(
                    &raw,
                    layout,
                    train.stats().clone(),
                    Provenance::Synthetic {
                        seed,
                        params: config.generator,
                    },
                )?
            }
        };
        Ok(Self { train, eval })
    }
}

/// Loss aggregates of one training epoch, averaged over all training pairs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    /// Completed epochs after this one.
    pub epoch: usize,
    pub beta: f64,
    pub reconstruction_loss: f64,
    pub latent_loss: f64,
    pub total_loss: f64,
}

/// Model, optimizer and rng of one run; advances one epoch at a time.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub model: MultimodalVae,
    pub optimizer: Adam,
    pub rng: RngState,
    pub schedule: BetaSchedule,
    pub batch_size: usize,
    pub run_seed: u64,
    epoch: usize,
}

impl Trainer {
    /// Fresh model initialized from `run_seed`; the same stream then drives
    /// augmentation shuffling and reparameterization noise.
    pub fn new(config: &RunConfig, kind: ScheduleKind, run_seed: u64) -> Result<Self> {
        let mut rng = RngState::new(run_seed);
        let model = MultimodalVae::new(ModalityLayout::standard(), config.hidden, &mut rng)?;
        let optimizer = Adam::new(config.optimizer, model.params());
        Ok(Self {
            model,
            optimizer,
            rng,
            schedule: config.schedule(kind),
            batch_size: config.batch_size,
            run_seed,
            epoch: 0,
        })
    }

    pub fn resume(checkpoint: Checkpoint, schedule: BetaSchedule, batch_size: usize) -> Result<Self> {
        let optimizer = checkpoint
            .optimizer
            .ok_or_else(|| Error::Checkpoint("checkpoint lacks optimizer state".into()))?;
        Ok(Self {
            model: checkpoint.model,
            optimizer,
            rng: checkpoint.rng,
            schedule,
            batch_size,
            run_seed: checkpoint.run_seed.unwrap_or_default(),
            epoch: checkpoint.epoch,
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            model: self.model.clone(),
            optimizer: Some(self.optimizer.clone()),
            epoch: self.epoch,
            schedule: Some(self.schedule.kind),
            run_seed: Some(self.run_seed),
            rng: self.rng.clone(),
        }
    }

    /// Completed epochs.
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn is_finished(&self) -> bool {
        self.epoch >= self.schedule.total_epochs
    }

    pub fn train_epoch(&mut self, data: &Dataset) -> Result<EpochStats> {
        let epoch = self.epoch;
        let beta = self.schedule.beta_at(epoch)?;
        let pairs = augment(data, epoch, &mut self.rng);
        let latent_dim = self.model.latent_dim();
        let mut recon_sum = 0.0;
        let mut latent_sum = 0.0;
        let mut start = 0;
        while start < pairs.len() {
            let end = (start + self.batch_size).min(pairs.len());
            let (inputs, targets) = pairs.slice(start..end);
            let mut noise = Matrix::zeros(end - start, latent_dim);
            self.rng.fill_standard_normal(noise.as_mut_slice());
            let out = self.model.elbo_backward(&inputs, &targets, beta, &noise)?;
            for (k, (r, l)) in out.reconstruction.iter().zip(&out.latent).enumerate() {
                if !(r + beta * l).is_finite() {
                    return Err(Error::Training {
                        epoch,
                        sample: Some(pairs.source[start + k]),
                        reason: format!("non-finite loss (reconstruction {r}, latent {l})"),
                    });
                }
                recon_sum += r;
                latent_sum += l;
            }
            self.optimizer.step(self.model.params_mut(), epoch)?;
            start = end;
        }
        self.epoch += 1;
        let n = pairs.len() as f64;
        let reconstruction_loss = recon_sum / n;
        let latent_loss = latent_sum / n;
        Ok(EpochStats {
            epoch: self.epoch,
            beta,
            reconstruction_loss,
            latent_loss,
            total_loss: reconstruction_loss + beta * latent_loss,
        })
    }
}

/// In-memory outputs of one run, written to `dir` when the run ends.
#[derive(Debug, Clone)]
pub struct RunRecorder {
    pub schedule: ScheduleKind,
    pub run_seed: u64,
    pub dir: PathBuf,
    pub metrics: Vec<MetricsRow>,
    pub measures: Vec<MeasureRow>,
}

impl RunRecorder {
    pub fn new(schedule: ScheduleKind, run_seed: u64, dir: PathBuf) -> Self {
        Self {
            schedule,
            run_seed,
            dir,
            metrics: Vec::new(),
            measures: Vec::new(),
        }
    }

    pub fn checkpoint_path(dir: &Path, epoch: usize) -> PathBuf {
        dir.join("checkpoints").join(format!("epoch_{epoch}.ckpt"))
    }

    pub fn flush(&self) -> Result<()> {
        fs::create_dir_all(&self.dir).map_err(|e| Error::io(&self.dir, e))?;
        write_csv(&self.dir.join("metrics.csv"), &self.metrics)?;
        write_csv(&self.dir.join("measures.csv"), &self.measures)
    }
}

fn is_eval_epoch(config: &RunConfig, completed: usize) -> bool {
    completed % config.eval_every == 0 || completed == config.total_epochs
}

/// Trains until `until` completed epochs, recording every evaluation into
/// each recorder and saving checkpoints into each recorder's directory.
pub fn advance(
    trainer: &mut Trainer,
    until: usize,
    config: &RunConfig,
    data: &RunData,
    recorders: &mut [&mut RunRecorder],
) -> Result<()> {
    while trainer.epoch() < until {
        let stats = trainer.train_epoch(&data.train)?;
        let completed = stats.epoch;
        if is_eval_epoch(config, completed) {
            let report = MeasureEvaluator::new(&trainer.model, &data.eval, Some(config.eval_size))?
                .report(completed)?;
            log::info!(
                "{} seed {} epoch {completed}/{}: loss {:.4}, prediction error {:.4}, baseline {:.4}",
                trainer.schedule.kind,
                trainer.run_seed,
                config.total_epochs,
                stats.total_loss,
                report.prediction_error,
                report.baseline
            );
            for rec in recorders.iter_mut() {
                rec.metrics.push(MetricsRow::new(rec.schedule, rec.run_seed, &stats, report.prediction_error));
                rec.measures
                    .extend(MeasureRow::from_report(rec.schedule, rec.run_seed, &report));
            }
        }
        if completed % config.checkpoint_every == 0 || completed == config.total_epochs {
            let mut ck = trainer.checkpoint();
            for rec in recorders.iter() {
                ck.schedule = Some(rec.schedule);
                ck.save(&RunRecorder::checkpoint_path(&rec.dir, completed))?;
            }
        }
    }
    Ok(())
}

/// One complete run of `kind` with `run_seed`, written below `dir`.
pub fn train_run(
    config: &RunConfig,
    kind: ScheduleKind,
    run_seed: u64,
    data: &RunData,
    dir: &Path,
) -> Result<RunRecorder> {
    let mut rec = RunRecorder::new(kind, run_seed, dir.to_path_buf());
    let mut trainer = Trainer::new(config, kind, run_seed)?;
    let result = advance(&mut trainer, config.total_epochs, config, data, &mut [&mut rec]);
    rec.flush()?;
    result.map(|_| rec)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> RunConfig {
        RunConfig::default()
            .with_overrides(&[
                "total_epochs=3",
                "n_samples=40",
                "eval_size=16",
                "eval_every=2",
                "checkpoint_every=2",
                "batch_size=16",
            ])
            .unwrap()
    }

    #[test]
    fn epoch_stats_satisfy_loss_identity() {
        let config = small_config();
        let data = RunData::prepare(&config).unwrap();
        let mut t = Trainer::new(&config, ScheduleKind::Constant0, 4).unwrap();
        for _ in 0..3 {
            let s = t.train_epoch(&data.train).unwrap();
            assert!((s.total_loss - (s.reconstruction_loss + s.beta * s.latent_loss)).abs() < 1e-9);
        }
        assert!(t.is_finished());
        assert!(t.train_epoch(&data.train).is_err());
    }

    #[test]
    fn resume_from_checkpoint_is_exact() {
        let config = small_config();
        let data = RunData::prepare(&config).unwrap();
        let mut straight = Trainer::new(&config, ScheduleKind::DynPlateau0, 9).unwrap();
        straight.train_epoch(&data.train).unwrap();
        let mut buf = Vec::new();
        straight.checkpoint().write_to(&mut buf).unwrap();
        let ck = Checkpoint::read_from(buf.as_slice()).unwrap();
        let mut resumed = Trainer::resume(ck, straight.schedule, config.batch_size).unwrap();
        let a = straight.train_epoch(&data.train).unwrap();
        let b = resumed.train_epoch(&data.train).unwrap();
        assert_eq!(a, b);
        assert_eq!(straight.model.params().values(), resumed.model.params().values());
    }

    #[test]
    fn fresh_eval_set_uses_training_statistics() {
        let config = small_config().with_overrides(&["eval_source=fresh"]).unwrap();
        let data = RunData::prepare(&config).unwrap();
        assert_eq!(data.eval.len(), 16);
        assert_eq!(data.eval.stats(), data.train.stats());
        data.eval.validate().unwrap();
    }

    #[test]
    fn run_writes_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let config = small_config();
        let data = RunData::prepare(&config).unwrap();
        let rec = train_run(&config, ScheduleKind::Constant1, 0, &data, dir.path()).unwrap();
        // Evaluations after epochs 2 and 3.
        assert_eq!(rec.metrics.len(), 2);
        assert_eq!(rec.measures.len(), 2 * 21);
        for e in [2, 3] {
            assert!(RunRecorder::checkpoint_path(dir.path(), e).exists());
        }
        assert!(dir.path().join("metrics.csv").exists());
    }
}
