use std::fs;
use std::path::Path;

use mmvae_core::harness::{
    aggregate, run_dir, run_experiment, train_run, Manifest, RunConfig, RunData, RunStatus, Trainer,
};
use mmvae_core::measures::prediction_error;
use mmvae_core::ScheduleKind;
use proptest::prelude::*;

fn small(extra: &[&str]) -> RunConfig {
    RunConfig::default()
        .with_overrides(&[
            "total_epochs=12",
            "runs=2",
            "n_samples=48",
            "eval_size=16",
            "eval_every=3",
            "checkpoint_every=6",
            "batch_size=32",
            "warmup_epochs=4",
            "cycle_length=3",
            "min_descent=1",
        ])
        .unwrap()
        .with_overrides(extra)
        .unwrap()
}

fn run_files(root: &Path, manifest: &Manifest) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    for run in &manifest.runs {
        for f in ["metrics.csv", "measures.csv", "checkpoints/epoch_6.ckpt", "checkpoints/epoch_12.ckpt"] {
            let rel = run.dir.join(f);
            out.push((rel.display().to_string(), fs::read(root.join(&rel)).unwrap()));
        }
    }
    out
}

#[test]
fn shared_prefix_matches_separate_runs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ma = run_experiment(&small(&["share_prefix=true"]), a.path()).unwrap();
    let mb = run_experiment(&small(&["share_prefix=false"]), b.path()).unwrap();
    assert_eq!(ma.runs, mb.runs);
    assert_eq!(run_files(a.path(), &ma), run_files(b.path(), &mb));
}

#[test]
fn thread_count_does_not_change_outputs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ma = run_experiment(&small(&["threads=1"]), a.path()).unwrap();
    let mb = run_experiment(&small(&["threads=3"]), b.path()).unwrap();
    assert_eq!(ma.config_hash, mb.config_hash);
    assert_eq!(run_files(a.path(), &ma), run_files(b.path(), &mb));
    for f in ["aggregate_metrics.csv", "aggregate_measures.csv"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap());
    }
}

#[test]
fn manifest_records_runs_and_data() {
    let dir = tempfile::tempdir().unwrap();
    let config = small(&["schedules=[\"constant1\",\"dyn_plateau0\"]"]);
    let m = run_experiment(&config, dir.path()).unwrap();
    assert_eq!(Manifest::load(&dir.path().join("manifest.json")).unwrap(), m);
    assert_eq!(m.seeds, vec![0, 1]);
    assert_eq!(m.runs.len(), 4);
    assert!(m.runs.iter().all(|r| r.status == RunStatus::Completed));
    assert_eq!(m.runs[0].dir, run_dir(ScheduleKind::Constant1, 0));
    assert_eq!(m.schedules(), vec![ScheduleKind::Constant1, ScheduleKind::DynPlateau0]);
    assert_eq!((m.data.train_samples, m.data.eval_samples), (48, 16));
    let metrics = fs::read_to_string(dir.path().join("dyn_plateau0/run_1/metrics.csv")).unwrap();
    let epochs: Vec<&str> = metrics.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(epochs, ["3", "6", "9", "12"]);
}

#[test]
fn diverging_runs_are_recorded_as_failed() {
    let dir = tempfile::tempdir().unwrap();
    // A huge learning rate drives the log-variances into overflow.
    let config = small(&["optimizer.lr=1e300", "schedules=[\"constant1\"]"]);
    assert!(run_experiment(&config, dir.path()).is_err());
    let m = Manifest::load(&dir.path().join("manifest.json")).unwrap();
    assert_eq!(m.runs.len(), 2);
    for r in &m.runs {
        assert_eq!(r.status, RunStatus::Failed);
        assert!(r.error.as_deref().unwrap().contains("non-finite"), "{:?}", r.error);
    }
}

proptest! {
    #[test]
    fn aggregate_brackets_the_mean(
        runs in prop::collection::vec(prop::collection::vec((0usize..6, -1e3f64..1e3), 0..8), 1..5)
    ) {
        let runs: Vec<Vec<(usize, f64)>> = runs
            .into_iter()
            .map(|mut r| { r.sort_by_key(|p| p.0); r.dedup_by_key(|p| p.0); r })
            .collect();
        let total: usize = runs.iter().map(Vec::len).sum();
        let agg = aggregate(&runs);
        prop_assert_eq!(agg.iter().map(|p| p.count).sum::<usize>(), total);
        for p in &agg {
            prop_assert!(p.min <= p.mean + 1e-9 && p.mean <= p.max + 1e-9);
        }
        prop_assert!(agg.windows(2).all(|w| w[0].epoch < w[1].epoch));
    }
}

#[test]
fn aggregate_of_identical_runs_is_degenerate() {
    let run = vec![(1, 2.0), (2, -0.5)];
    for p in aggregate(&[run.clone(), run.clone(), run]) {
        assert_eq!((p.min, p.max, p.count), (p.mean, p.mean, 3));
    }
}

#[test]
fn training_reduces_prediction_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = RunConfig::default()
        .with_overrides(&["total_epochs=200", "n_samples=200", "eval_size=100", "eval_every=10"])
        .unwrap();
    let data = RunData::prepare(&config).unwrap();
    let untrained = Trainer::new(&config, ScheduleKind::Constant0, 0).unwrap();
    let initial = prediction_error(&untrained.model, &data.eval).unwrap();
    let rec = train_run(&config, ScheduleKind::Constant0, 0, &data, dir.path()).unwrap();
    let last = rec.metrics.last().unwrap();
    assert_eq!(last.epoch, 200);
    assert!(last.prediction_error < 0.5 * initial, "{initial} -> {}", last.prediction_error);
}
