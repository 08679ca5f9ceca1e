use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::experiment::{load_schedule_series, Manifest};
use crate::error::{Error, Result};
use crate::schedule::ScheduleKind;

/// Epoch window `(start, end]` over completed-epoch counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub start: usize,
    pub end: usize,
}

impl Window {
    pub fn contains(&self, epoch: usize) -> bool {
        epoch > self.start && epoch <= self.end
    }
}

/// `(6T/8, 7T/8]` and `(7T/8, T]`.
pub fn tail_windows(total_epochs: usize) -> [Window; 2] {
    let t = total_epochs;
    [
        Window {
            start: 6 * t / 8,
            end: 7 * t / 8,
        },
        Window {
            start: 7 * t / 8,
            end: t,
        },
    ]
}

/// Mean of the values logged inside `window`; `None` when there are none.
pub fn window_mean(series: &[(usize, f64)], window: Window) -> Option<f64> {
    let vals: Vec<f64> = series
        .iter()
        .filter(|(e, _)| window.contains(*e))
        .map(|&(_, v)| v)
        .collect();
    (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
}

/// Mean and sample standard deviation over runs of the per-run window means.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowStats {
    pub mean: f64,
    pub sd: f64,
    pub runs: usize,
}

pub fn window_stats(runs: &[Vec<(usize, f64)>], window: Window) -> Option<WindowStats> {
    let means: Vec<f64> = runs.iter().filter_map(|r| window_mean(r, window)).collect();
    if means.is_empty() {
        return None;
    }
    let n = means.len() as f64;
    let mean = means.iter().sum::<f64>() / n;
    let sd = if means.len() > 1 {
        (means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Some(WindowStats {
        mean,
        sd,
        runs: means.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub experiment: String,
    pub schedule: ScheduleKind,
    /// Measure family or metric name.
    pub measure: String,
    /// `modality`, `all`, or empty for training metrics.
    pub scope: String,
    pub modality: String,
    pub window1_mean: f64,
    pub window1_sd: f64,
    pub window2_mean: f64,
    pub window2_sd: f64,
    pub runs: usize,
}

/// Window statistics of every series of every schedule in `experiments`.
pub fn compare_schedules(experiments: &[PathBuf]) -> Result<Vec<ComparisonRow>> {
    if experiments.is_empty() {
        return Err(Error::Usage("no experiments to compare".into()));
    }
    let manifests: Vec<Manifest> = experiments
        .iter()
        .map(|d| Manifest::load(&d.join("manifest.json")))
        .collect::<Result<_>>()?;
    let first = &manifests[0];
    for (m, dir) in manifests.iter().zip(experiments).skip(1) {
        if m.data.eval_sha256 != first.data.eval_sha256 || m.data.train_sha256 != first.data.train_sha256 {
            return Err(Error::Usage(format!(
                "{} was trained or evaluated on different data",
                dir.display()
            )));
        }
        if m.config.total_epochs != first.config.total_epochs {
            return Err(Error::Usage(format!("{} has a different epoch count", dir.display())));
        }
    }
    let [w1, w2] = tail_windows(first.config.total_epochs);
    let mut rows = Vec::new();
    for (manifest, dir) in manifests.iter().zip(experiments) {
        let label = experiment_label(dir);
        for schedule in manifest.schedules() {
            let series = load_schedule_series(manifest, dir, schedule)?;
            let mut push = |measure: String, scope: String, modality: String, runs: &[Vec<(usize, f64)>]| {
                if let (Some(a), Some(b)) = (window_stats(runs, w1), window_stats(runs, w2)) {
                    rows.push(ComparisonRow {
                        experiment: label.clone(),
                        schedule,
                        measure,
                        scope,
                        modality,
                        window1_mean: a.mean,
                        window1_sd: a.sd,
                        window2_mean: b.mean,
                        window2_sd: b.sd,
                        runs: b.runs,
                    });
                }
            };
            for (key, runs) in &series.measures {
                push(
                    key.measure.name().to_string(),
                    key.scope.name().to_string(),
                    key.modality.map(|m| m.name().to_string()).unwrap_or_default(),
                    runs,
                );
            }
            for (name, runs) in &series.metrics {
                push(name.clone(), String::new(), String::new(), runs);
            }
        }
    }
    Ok(rows)
}

fn experiment_label(dir: &Path) -> String {
    dir.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| dir.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn windows_split_the_last_quarter() {
        let [a, b] = tail_windows(8000);
        assert_eq!((a.start, a.end), (6000, 7000));
        assert_eq!((b.start, b.end), (7000, 8000));
        assert!(!a.contains(6000) && a.contains(7000) && b.contains(8000));
    }

    #[test]
    fn window_mean_by_hand() {
        let s: Vec<(usize, f64)> = (1..=8).map(|e| (e * 100, e as f64)).collect();
        let [a, b] = tail_windows(800);
        assert_eq!(window_mean(&s, a), Some(7.0));
        assert_eq!(window_mean(&s, b), Some(8.0));
        assert_eq!(window_mean(&s, Window { start: 800, end: 900 }), None);
    }

    #[test]
    fn window_stats_use_sample_sd() {
        let w = Window { start: 0, end: 10 };
        let runs = vec![vec![(5, 1.0)], vec![(5, 3.0)]];
        let s = window_stats(&runs, w).unwrap();
        assert_eq!(s.mean, 2.0);
        assert!((s.sd - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(window_stats(&runs[..1], w).unwrap().sd, 0.0);
    }
}
