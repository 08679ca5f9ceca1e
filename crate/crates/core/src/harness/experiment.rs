use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::RunConfig;
use super::records::{read_csv, write_csv, MeasureKey, MeasureRow, MetricsRow};
use super::train::{advance, RunData, RunRecorder, Trainer};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::schedule::ScheduleKind;

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEntry {
    pub schedule: ScheduleKind,
    pub run_seed: u64,
    pub status: RunStatus,
    pub error: Option<String>,
    /// Relative to the experiment directory.
    pub dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSummary {
    pub train_samples: usize,
    pub eval_samples: usize,
    pub train_sha256: String,
    pub eval_sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub manifest_version: u32,
    pub code_version: String,
    pub config: RunConfig,
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub data: DataSummary,
    pub runs: Vec<RunEntry>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn completed(&self, schedule: ScheduleKind) -> impl Iterator<Item = &RunEntry> {
        self.runs
            .iter()
            .filter(move |r| r.schedule == schedule && r.status == RunStatus::Completed)
    }

    pub fn schedules(&self) -> Vec<ScheduleKind> {
        let mut out: Vec<ScheduleKind> = self.runs.iter().map(|r| r.schedule).collect();
        out.sort();
        out.dedup();
        out
    }
}

pub fn dataset_hash(ds: &Dataset) -> String {
    let mut h = Sha256::new();
    for v in ds.samples().as_slice() {
        h.update(v.to_le_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

pub fn run_dir(schedule: ScheduleKind, run_seed: u64) -> PathBuf {
    PathBuf::from(schedule.name()).join(format!("run_{run_seed}"))
}

/// One unit of work: a single schedule, or both dynamic schedules sharing
/// every epoch before the tail.
#[derive(Debug, Clone, Copy)]
enum Job {
    Single(ScheduleKind, u64),
    SharedPrefix(u64),
}

fn plan_jobs(config: &RunConfig) -> Vec<Job> {
    let both_dynamic = config.schedules.contains(&ScheduleKind::DynPlateau0)
        && config.schedules.contains(&ScheduleKind::DynPlateau1);
    let share = config.share_prefix && both_dynamic;
    let mut jobs = Vec::new();
    for &kind in &config.schedules {
        for run in 0..config.runs {
            let seed = config.run_seed(run);
            match kind {
                ScheduleKind::DynPlateau0 if share => jobs.push(Job::SharedPrefix(seed)),
                ScheduleKind::DynPlateau1 if share => {}
                _ => jobs.push(Job::Single(kind, seed)),
            }
        }
    }
    jobs
}

fn entry(rec: &RunRecorder, root: &Path, result: &Result<()>) -> RunEntry {
    RunEntry {
        schedule: rec.schedule,
        run_seed: rec.run_seed,
        status: if result.is_ok() {
            RunStatus::Completed
        } else {
            RunStatus::Failed
        },
        error: result.as_ref().err().map(|e| e.to_string()),
        dir: rec.dir.strip_prefix(root).unwrap_or(&rec.dir).to_path_buf(),
    }
}

fn execute(job: Job, config: &RunConfig, data: &RunData, root: &Path) -> Result<Vec<RunEntry>> {
    match job {
        Job::Single(kind, seed) => {
            let mut rec = RunRecorder::new(kind, seed, root.join(run_dir(kind, seed)));
            let result = Trainer::new(config, kind, seed).and_then(|mut t| {
                advance(&mut t, config.total_epochs, config, data, &mut [&mut rec])
            });
            rec.flush()?;
            Ok(vec![entry(&rec, root, &result)])
        }
        Job::SharedPrefix(seed) => {
            let (k0, k1) = (ScheduleKind::DynPlateau0, ScheduleKind::DynPlateau1);
            let mut rec0 = RunRecorder::new(k0, seed, root.join(run_dir(k0, seed)));
            let mut rec1 = RunRecorder::new(k1, seed, root.join(run_dir(k1, seed)));
            let prefix = Trainer::new(config, k0, seed).and_then(|mut t| {
                advance(&mut t, config.tail_start(), config, data, &mut [&mut rec0, &mut rec1])
                    .map(|_| t)
            });
            let (r0, r1) = match prefix {
                Ok(mut t0) => {
                    let mut t1 = t0.clone();
                    t1.schedule = config.schedule(k1);
                    let r0 = advance(&mut t0, config.total_epochs, config, data, &mut [&mut rec0]);
                    let r1 = advance(&mut t1, config.total_epochs, config, data, &mut [&mut rec1]);
                    (r0, r1)
                }
                Err(e) => {
                    let msg = e.to_string();
                    (Err(e), Err(Error::Experiment(msg)))
                }
            };
            rec0.flush()?;
            rec1.flush()?;
            Ok(vec![entry(&rec0, root, &r0), entry(&rec1, root, &r1)])
        }
    }
}

/// Runs every (schedule, seed) of `config` below `out_dir`, writes the
/// per-run CSVs, the aggregates and `manifest.json`.
pub fn run_experiment(config: &RunConfig, out_dir: &Path) -> Result<Manifest> {
    config.validate()?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let data = RunData::prepare(config)?;
    let jobs = plan_jobs(config);
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<(usize, Result<Vec<RunEntry>>)>> = Mutex::new(Vec::new());
    std::thread::scope(|s| {
        for _ in 0..config.threads.max(1).min(jobs.len()) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(&job) = jobs.get(i) else { break };
                let r = execute(job, config, &data, out_dir);
                results.lock().expect("result lock").push((i, r));
            });
        }
    });
    let mut results = results.into_inner().expect("result lock");
    results.sort_by_key(|(i, _)| *i);
    let mut runs = Vec::new();
    for (_, r) in results {
        runs.extend(r?);
    }
    runs.sort_by_key(|r| {
        let pos = config.schedules.iter().position(|&k| k == r.schedule);
        (pos, r.run_seed)
    });
    let manifest = Manifest {
        manifest_version: MANIFEST_VERSION,
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        config: config.clone(),
        config_hash: config.hash(),
        seeds: (0..config.runs).map(|i| config.run_seed(i)).collect(),
        data: DataSummary {
            train_samples: data.train.len(),
            eval_samples: data.eval.len(),
            train_sha256: dataset_hash(&data.train),
            eval_sha256: dataset_hash(&data.eval),
        },
        runs,
    };
    manifest.save(&out_dir.join("manifest.json"))?;
    if manifest.runs.iter().all(|r| r.status == RunStatus::Failed) {
        return Err(Error::Experiment("every run failed".into()));
    }
    let (metrics, measures) = aggregate_experiment(&manifest, out_dir)?;
    write_csv(&out_dir.join("aggregate_metrics.csv"), &metrics)?;
    write_csv(&out_dir.join("aggregate_measures.csv"), &measures)?;
    Ok(manifest)
}

/// Mean, min and max over runs at one epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregatePoint {
    pub epoch: usize,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

/// Per-epoch aggregate of one series over runs; runs missing an epoch do
/// not contribute to it.
pub fn aggregate(runs: &[Vec<(usize, f64)>]) -> Vec<AggregatePoint> {
    let mut by_epoch: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for run in runs {
        for &(e, v) in run {
            by_epoch.entry(e).or_default().push(v);
        }
    }
    by_epoch
        .into_iter()
        .map(|(epoch, vals)| AggregatePoint {
            epoch,
            mean: vals.iter().sum::<f64>() / vals.len() as f64,
            min: vals.iter().copied().fold(f64::INFINITY, f64::min),
            max: vals.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            count: vals.len(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateMetricRow {
    pub schedule: ScheduleKind,
    pub metric: String,
    pub epoch: usize,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateMeasureRow {
    pub schedule: ScheduleKind,
    pub measure: crate::measures::MeasureFamily,
    pub scope: crate::measures::Scope,
    pub modality: Option<crate::layout::Modality>,
    pub epoch: usize,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

/// Per-run series of one schedule, read back from the run directories.
#[derive(Debug, Clone, Default)]
pub struct ScheduleSeries {
    /// metric name -> one `(epoch, value)` series per completed run
    pub metrics: BTreeMap<String, Vec<Vec<(usize, f64)>>>,
    pub measures: BTreeMap<MeasureKey, Vec<Vec<(usize, f64)>>>,
    pub runs: usize,
}

pub fn load_schedule_series(manifest: &Manifest, dir: &Path, schedule: ScheduleKind) -> Result<ScheduleSeries> {
    let mut out = ScheduleSeries::default();
    for run in manifest.completed(schedule) {
        let run_dir = dir.join(&run.dir);
        let metrics: Vec<MetricsRow> = read_csv(&run_dir.join("metrics.csv"))?;
        let mut per_metric: BTreeMap<String, Vec<(usize, f64)>> = BTreeMap::new();
        for row in &metrics {
            for (name, v) in row.values() {
                per_metric.entry(name.to_string()).or_default().push((row.epoch, v));
            }
        }
        for (k, s) in per_metric {
            out.metrics.entry(k).or_default().push(s);
        }
        let measures: Vec<MeasureRow> = read_csv(&run_dir.join("measures.csv"))?;
        let mut per_key: BTreeMap<MeasureKey, Vec<(usize, f64)>> = BTreeMap::new();
        for row in &measures {
            per_key.entry(row.key()).or_default().push((row.epoch, row.value));
        }
        for (k, s) in per_key {
            out.measures.entry(k).or_default().push(s);
        }
        out.runs += 1;
    }
    Ok(out)
}

pub fn aggregate_experiment(
    manifest: &Manifest,
    dir: &Path,
) -> Result<(Vec<AggregateMetricRow>, Vec<AggregateMeasureRow>)> {
    let mut metrics = Vec::new();
    let mut measures = Vec::new();
    for schedule in manifest.schedules() {
        let series = load_schedule_series(manifest, dir, schedule)?;
        for (name, runs) in &series.metrics {
            for p in aggregate(runs) {
                metrics.push(AggregateMetricRow {
                    schedule,
                    metric: name.clone(),
                    epoch: p.epoch,
                    mean: p.mean,
                    min: p.min,
                    max: p.max,
                    count: p.count,
                });
            }
        }
        for (key, runs) in &series.measures {
            for p in aggregate(runs) {
                measures.push(AggregateMeasureRow {
                    schedule,
                    measure: key.measure,
                    scope: key.scope,
                    modality: key.modality,
                    epoch: p.epoch,
                    mean: p.mean,
                    min: p.min,
                    max: p.max,
                    count: p.count,
                });
            }
        }
    }
    Ok((metrics, measures))
}
