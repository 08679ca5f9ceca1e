use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use mmvae_core::checkpoint::Checkpoint;
use mmvae_core::data::{generate_raw, write_raw_csv};
use mmvae_core::harness::{
    chart_from_csv, compare_schedules, run_dir, run_experiment, train_run, write_csv_to,
    write_experiment_figures, Manifest, MeasureRow, RunConfig, RunData,
};
use mmvae_core::measures::MeasureEvaluator;
use mmvae_core::{ModalityLayout, ScheduleKind};

#[derive(Parser, Debug)]
#[command(
    name = "mmvae",
    version,
    about = "Multimodal VAE lab: train under beta schedules and measure multimodal integration",
    after_help = "Any run-config field can be overridden with --<field>=<value>, nested fields \
                  with dots (--generator.noise=0.02). Values are parsed as JSON."
)]
struct Cli {
    /// JSON run configuration; defaults are used for missing fields.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic raw dataset as CSV.
    GenData {
        /// Output CSV; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train one run of one schedule.
    Train {
        #[arg(long)]
        schedule: ScheduleKind,
        /// Run seed; defaults to the configured base seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Run directory; defaults to <output root>/<schedule>/run_<seed>.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every configured schedule and seed, then write aggregates and figures.
    Experiment {
        /// Re-run the experiment recorded in this manifest.
        #[arg(long, value_name = "MANIFEST")]
        manifest: Option<PathBuf>,
        /// Experiment directory; defaults to <output root>/experiment_<config hash>.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate all measures of a checkpoint on the configured evaluation set.
    Measure {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Measure CSV; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tail-window statistics of one or more experiments.
    Compare {
        #[arg(required = true)]
        experiments: Vec<PathBuf>,
        /// Comparison CSV; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render a CSV as an SVG line chart, or every figure of an experiment.
    Plot {
        /// Input CSV.
        #[arg(long, conflicts_with = "experiment", required_unless_present = "experiment")]
        csv: Option<PathBuf>,
        /// Experiment directory; writes figures/*.svg inside it.
        #[arg(long)]
        experiment: Option<PathBuf>,
        #[arg(long, default_value = "epoch")]
        x: String,
        #[arg(long, default_value = "value")]
        y: String,
        /// Columns whose values split the rows into series.
        #[arg(long = "group-by", value_delimiter = ',')]
        group_by: Vec<String>,
        /// Keep only rows with column=value; repeatable.
        #[arg(long = "filter", value_parser = parse_filter)]
        filters: Vec<(String, String)>,
        #[arg(long)]
        title: Option<String>,
        /// Output SVG; required with --csv.
        #[arg(long, required_unless_present = "experiment")]
        out: Option<PathBuf>,
    },
    /// Write the beta value of every epoch as epoch,beta CSV.
    ScheduleDump {
        #[arg(long)]
        schedule: ScheduleKind,
        /// Keep every n-th epoch.
        #[arg(long, default_value_t = 1)]
        stride: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_filter(s: &str) -> Result<(String, String), String> {
    s.split_once('=')
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .ok_or_else(|| format!("expected column=value, got {s:?}"))
}

/// Splits `--field=value` config overrides from the arguments clap parses.
fn split_overrides(args: Vec<String>) -> (Vec<String>, Vec<String>) {
    let defaults = serde_json::to_value(RunConfig::default()).expect("config serializes");
    let fields = defaults.as_object().expect("config is an object");
    let is_override = |a: &str| {
        a.strip_prefix("--")
            .and_then(|rest| rest.split_once('='))
            .is_some_and(|(key, _)| fields.contains_key(key.split('.').next().unwrap_or(key)))
    };
    args.into_iter().partition(|a| !is_override(a))
}

fn read_config(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig> {
    let base = match path {
        Some(p) => RunConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => RunConfig::default(),
    };
    Ok(base.with_overrides(overrides)?)
}

fn load_config(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig> {
    let config = read_config(path, overrides)?;
    config.validate()?;
    Ok(config)
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => {
            if let Some(parent) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(parent)?;
            }
            Box::new(io::BufWriter::new(
                fs::File::create(p).with_context(|| format!("creating {}", p.display()))?,
            ))
        }
        None => Box::new(io::stdout().lock()),
    })
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let (args, overrides) = split_overrides(std::env::args().collect());
    let cli = Cli::parse_from(args);
    let config_path = cli.config.as_deref();

    match cli.command {
        Command::GenData { out } => {
            let config = read_config(config_path, &overrides)?;
            let raw = generate_raw(config.data_seed, config.n_samples, &config.generator)?;
            write_raw_csv(&raw, &ModalityLayout::standard(), output(out.as_deref())?)?;
        }
        Command::Train { schedule, seed, out } => {
            let config = load_config(config_path, &overrides)?;
            let seed = seed.unwrap_or(config.base_seed);
            let dir = out.unwrap_or_else(|| config.resolved_output_root().join(run_dir(schedule, seed)));
            let data = RunData::prepare(&config)?;
            let rec = train_run(&config, schedule, seed, &data, &dir)?;
            let last = rec.metrics.last();
            println!(
                "{} seed {seed}: {} epochs, final prediction error {}",
                schedule,
                config.total_epochs,
                last.map_or("n/a".into(), |m| format!("{:.6}", m.prediction_error))
            );
            println!("outputs in {}", dir.display());
        }
        Command::Experiment { manifest, out } => {
            let config = match &manifest {
                Some(path) => {
                    if config_path.is_some() {
                        bail!("--config and --manifest are mutually exclusive");
                    }
                    let m = Manifest::load(path)?;
                    let mut c = m.config.with_overrides(&overrides)?;
                    // The output location of the original run is not replayed.
                    c.output_root = None;
                    c.validate()?;
                    c
                }
                None => load_config(config_path, &overrides)?,
            };
            let dir = out.unwrap_or_else(|| {
                config
                    .resolved_output_root()
                    .join(format!("experiment_{}", &config.hash()[..12]))
            });
            let manifest = run_experiment(&config, &dir)?;
            let figures = write_experiment_figures(&dir)?;
            let failed = manifest.runs.iter().filter(|r| r.error.is_some()).count();
            println!(
                "{} runs ({failed} failed), {} figures in {}",
                manifest.runs.len(),
                figures.len(),
                dir.display()
            );
        }
        Command::Measure { checkpoint, out } => {
            let config = load_config(config_path, &overrides)?;
            let ck = Checkpoint::load(&checkpoint)?;
            let schedule = ck
                .schedule
                .context("checkpoint does not record its schedule")?;
            let data = RunData::prepare(&config)?;
            let report = MeasureEvaluator::new(&ck.model, &data.eval, Some(config.eval_size))?
                .report(ck.epoch)?;
            let rows = MeasureRow::from_report(schedule, ck.run_seed.unwrap_or_default(), &report);
            write_csv_to(output(out.as_deref())?, &rows)?;
            eprintln!("prediction error {:.6}", report.prediction_error);
        }
        Command::Compare { experiments, out } => {
            let rows = compare_schedules(&experiments)?;
            write_csv_to(output(out.as_deref())?, &rows)?;
        }
        Command::Plot { csv, experiment, x, y, group_by, filters, title, out } => {
            if let Some(dir) = experiment {
                for f in write_experiment_figures(&dir)? {
                    println!("{}", f.display());
                }
            } else {
                let csv = csv.expect("clap enforces --csv");
                let out = out.expect("clap enforces --out");
                let mut chart = chart_from_csv(&csv, &x, &y, &group_by, &filters)?;
                if let Some(t) = title {
                    chart.title = t;
                }
                chart.save(&out)?;
                println!("{}", out.display());
            }
        }
        Command::ScheduleDump { schedule, stride, out } => {
            let config = read_config(config_path, &overrides)?;
            if stride == 0 {
                bail!("--stride must be at least 1");
            }
            let schedule = config.schedule(schedule);
            schedule.validate()?;
            schedule.write_table_csv(stride, output(out.as_deref())?)?;
        }
    }
    Ok(())
}
