//! Seeded training runs, multi-run experiments, schedule comparison and
//! plotting.

mod compare;
mod config;
mod experiment;
mod plot;
mod records;
mod train;

pub use compare::{compare_schedules, tail_windows, window_mean, window_stats, ComparisonRow, Window, WindowStats};
pub use config::{EvalSource, RunConfig, OUTPUT_ROOT_ENV};
pub use experiment::{
    aggregate, aggregate_experiment, dataset_hash, load_schedule_series, run_dir, run_experiment,
    AggregateMeasureRow, AggregateMetricRow, AggregatePoint, DataSummary, Manifest, RunEntry,
    RunStatus, ScheduleSeries, MANIFEST_VERSION,
};
pub use plot::{chart_from_csv, write_experiment_figures, LineChart, Series};
pub use records::{read_csv, write_csv, write_csv_to, MeasureKey, MeasureRow, MetricsRow};
pub use train::{advance, train_run, EpochStats, RunData, RunRecorder, Trainer};
