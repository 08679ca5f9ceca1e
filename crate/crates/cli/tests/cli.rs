use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &[&str] = &[
    "--total_epochs=8",
    "--runs=2",
    "--n_samples=48",
    "--eval_size=16",
    "--eval_every=1",
    "--checkpoint_every=4",
    "--batch_size=32",
    "--warmup_epochs=2",
    "--cycle_length=2",
    "--min_descent=1",
];

fn mmvae(cwd: &Path, args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_mmvae"))
        .current_dir(cwd)
        .env("RUST_LOG", "warn")
        .env_remove("MMVAE_OUTPUT_ROOT")
        .args(args)
        .output()
        .expect("binary runs");
    assert!(
        out.status.success(),
        "mmvae {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn with_small<'a>(args: &[&'a str]) -> Vec<&'a str> {
    args.iter().copied().chain(SMALL.iter().copied()).collect()
}

#[test]
fn schedule_dump_writes_epoch_beta() {
    let dir = tempfile::tempdir().unwrap();
    let out = mmvae(dir.path(), &["schedule-dump", "--schedule", "constant0", "--total_epochs=8", "--warmup_epochs=4"]);
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "epoch,beta");
    assert_eq!(lines.len(), 9);
    assert_eq!(lines[1], "0,1");
    assert_eq!(lines[8], "7,0");
}

#[test]
fn gen_data_has_the_dataset_header() {
    let dir = tempfile::tempdir().unwrap();
    mmvae(dir.path(), &["gen-data", "--out", "data/raw.csv", "--n_samples=10"]);
    let text = fs::read_to_string(dir.path().join("data/raw.csv")).unwrap();
    let header: Vec<&str> = text.lines().next().unwrap().split(',').collect();
    assert_eq!(header.len(), 28);
    assert_eq!(header[0], "joint_tm1_0");
    assert_eq!(header[27], "motor_t_3");
    assert_eq!(text.lines().count(), 11);
}

#[test]
fn config_file_and_overrides_combine() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("cfg.json"), r#"{"total_epochs": 40, "warmup_epochs": 10}"#).unwrap();
    let out = mmvae(
        dir.path(),
        &["schedule-dump", "--config", "cfg.json", "--schedule", "constant0", "--warmup_epochs=20"],
    );
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 41);
    assert!(text.contains("\n10,0.5\n"), "{text}");
}

#[test]
fn unknown_override_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_mmvae"))
        .current_dir(dir.path())
        .args(["schedule-dump", "--schedule", "constant1", "--epochs=3"])
        .output()
        .unwrap();
    assert!(!out.status.success());
}

#[test]
fn train_uses_the_output_root_variable() {
    let dir = tempfile::tempdir().unwrap();
    let status = Command::new(env!("CARGO_BIN_EXE_mmvae"))
        .current_dir(dir.path())
        .env("RUST_LOG", "warn")
        .env("MMVAE_OUTPUT_ROOT", "elsewhere")
        .args(with_small(&["train", "--schedule", "dyn_plateau1", "--seed", "3"]))
        .status()
        .unwrap();
    assert!(status.success());
    let run = dir.path().join("elsewhere/dyn_plateau1/run_3");
    assert!(run.join("metrics.csv").exists());
    assert!(run.join("measures.csv").exists());
    assert!(run.join("checkpoints/epoch_8.ckpt").exists());
}

#[test]
fn experiment_measure_compare_plot_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    mmvae(root, &with_small(&["experiment", "--out", "exp"]));
    let exp = root.join("exp");
    for f in ["manifest.json", "aggregate_metrics.csv", "figures/baseline.svg", "figures/prediction_error.svg"] {
        assert!(exp.join(f).exists(), "{f}");
    }

    // Re-running from the manifest reproduces every run's CSVs.
    mmvae(root, &["experiment", "--manifest", "exp/manifest.json", "--out", "again"]);
    for schedule in ["constant0", "constant1", "dyn_plateau0", "dyn_plateau1"] {
        for seed in 0..2 {
            for f in ["metrics.csv", "measures.csv"] {
                let rel = format!("{schedule}/run_{seed}/{f}");
                let a = fs::read(exp.join(&rel)).unwrap();
                let b = fs::read(root.join("again").join(&rel)).unwrap();
                assert_eq!(a, b, "{rel}");
            }
        }
    }

    // The final checkpoint re-measures to the logged values.
    let out = mmvae(
        root,
        &with_small(&["measure", "--checkpoint", "exp/constant1/run_1/checkpoints/epoch_8.ckpt"]),
    );
    let measured = String::from_utf8(out.stdout).unwrap();
    let logged = fs::read_to_string(exp.join("constant1/run_1/measures.csv")).unwrap();
    let final_rows: Vec<&str> = logged.lines().filter(|l| l.starts_with("8,")).collect();
    assert_eq!(final_rows.len(), 21);
    assert_eq!(measured.lines().skip(1).collect::<Vec<_>>(), final_rows);

    mmvae(root, &["compare", "exp", "again", "--out", "cmp.csv"]);
    let mut reader = csv::Reader::from_path(root.join("cmp.csv")).unwrap();
    let headers = reader.headers().unwrap().clone();
    assert_eq!(&headers[0], "experiment");
    assert!(reader.records().count() > 0);

    mmvae(
        root,
        &[
            "plot",
            "--csv",
            "exp/aggregate_measures.csv",
            "--y",
            "mean",
            "--group-by",
            "schedule",
            "--filter",
            "measure=baseline",
            "--out",
            "baseline.svg",
        ],
    );
    let svg = fs::read_to_string(root.join("baseline.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("constant0"));
}
