//! Minimal SVG line charts for CSV series.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::experiment::{AggregateMeasureRow, AggregateMetricRow};
use super::records::read_csv;
use crate::error::{Error, Result};

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 420.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 160.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 50.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
    /// Optional `(x, low, high)` envelope drawn behind the line.
    pub band: Option<Vec<(f64, f64, f64)>>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LineChart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// About `n` round tick positions covering `[lo, hi]`.
fn ticks(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let span = (hi - lo).max(f64::EPSILON);
    let raw = span / n as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let mut t = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while t <= hi + step * 1e-9 {
        out.push(if t.abs() < step * 1e-9 { 0.0 } else { t });
        t += step;
    }
    out
}

fn fmt_tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e5 || v.abs() < 1e-3) {
        format!("{v:.1e}")
    } else {
        let s = format!("{v:.4}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

impl LineChart {
    fn bounds(&self) -> Option<(f64, f64, f64, f64)> {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for s in &self.series {
            for &(x, y) in &s.points {
                xs.push(x);
                ys.push(y);
            }
            for &(x, lo, hi) in s.band.iter().flatten() {
                xs.push(x);
                ys.push(lo);
                ys.push(hi);
            }
        }
        let finite = |v: &Vec<f64>| v.iter().copied().filter(|x| x.is_finite()).collect::<Vec<_>>();
        let (xs, ys) = (finite(&xs), finite(&ys));
        if xs.is_empty() {
            return None;
        }
        let min = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
        let max = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let (mut x0, mut x1, mut y0, mut y1) = (min(&xs), max(&xs), min(&ys), max(&ys));
        if x1 <= x0 {
            x0 -= 0.5;
            x1 += 0.5;
        }
        if y1 <= y0 {
            y0 -= 0.5;
            y1 += 0.5;
        }
        Some((x0, x1, y0, y1))
    }

    pub fn to_svg(&self) -> String {
        let mut svg = String::new();
        let _ = writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
            WIDTH / 2.0,
            escape(&self.title)
        );
        let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
        let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
        let Some((x0, x1, y0, y1)) = self.bounds() else {
            svg.push_str("</svg>\n");
            return svg;
        };
        let px = |x: f64| MARGIN_LEFT + (x - x0) / (x1 - x0) * plot_w;
        let py = |y: f64| MARGIN_TOP + (1.0 - (y - y0) / (y1 - y0)) * plot_h;

        let _ = writeln!(
            svg,
            r##"<rect x="{MARGIN_LEFT}" y="{MARGIN_TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="#444"/>"##
        );
        for t in ticks(x0, x1, 6) {
            let x = px(t);
            let _ = writeln!(
                svg,
                r##"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{MARGIN_TOP}" stroke="#ddd"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"##,
                MARGIN_TOP + plot_h,
                MARGIN_TOP + plot_h + 16.0,
                fmt_tick(t)
            );
        }
        for t in ticks(y0, y1, 6) {
            let y = py(t);
            let _ = writeln!(
                svg,
                r##"<line x1="{MARGIN_LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"##,
                MARGIN_LEFT + plot_w,
                MARGIN_LEFT - 6.0,
                y + 4.0,
                fmt_tick(t)
            );
        }
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            MARGIN_LEFT + plot_w / 2.0,
            HEIGHT - 12.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            svg,
            r#"<text transform="translate(18 {:.2}) rotate(-90)" text-anchor="middle">{}</text>"#,
            MARGIN_TOP + plot_h / 2.0,
            escape(&self.y_label)
        );

        for (i, s) in self.series.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            if let Some(band) = &s.band {
                let upper = band.iter().map(|&(x, _, hi)| format!("{:.2},{:.2}", px(x), py(hi)));
                let lower = band.iter().rev().map(|&(x, lo, _)| format!("{:.2},{:.2}", px(x), py(lo)));
                let pts: Vec<String> = upper.chain(lower).collect();
                let _ = writeln!(
                    svg,
                    r#"<polygon points="{}" fill="{color}" fill-opacity="0.15" stroke="none"/>"#,
                    pts.join(" ")
                );
            }
            let pts: Vec<String> = s
                .points
                .iter()
                .filter(|(x, y)| x.is_finite() && y.is_finite())
                .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
                .collect();
            let _ = writeln!(
                svg,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.6"/>"#,
                pts.join(" ")
            );
            let ly = MARGIN_TOP + 14.0 + 18.0 * i as f64;
            let lx = MARGIN_LEFT + plot_w + 12.0;
            let _ = writeln!(
                svg,
                r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2.5"/><text x="{:.2}" y="{:.2}">{}</text>"#,
                lx + 18.0,
                lx + 24.0,
                ly + 4.0,
                escape(&s.name)
            );
        }
        svg.push_str("</svg>\n");
        svg
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::write(path, self.to_svg()).map_err(|e| Error::io(path, e))
    }
}

/// Builds a chart from any CSV: one line per distinct combination of the
/// `group_by` columns, restricted to rows matching every `(column, value)`
/// filter.
pub fn chart_from_csv(
    path: &Path,
    x_col: &str,
    y_col: &str,
    group_by: &[String],
    filters: &[(String, String)],
) -> Result<LineChart> {
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Usage(format!("{} has no column {name:?}", path.display())))
    };
    let xi = col(x_col)?;
    let yi = col(y_col)?;
    let gi: Vec<usize> = group_by.iter().map(|g| col(g)).collect::<Result<_>>()?;
    let fi: Vec<(usize, &str)> = filters
        .iter()
        .map(|(c, v)| Ok((col(c)?, v.as_str())))
        .collect::<Result<_>>()?;
    let mut groups: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        if fi.iter().any(|&(i, v)| rec.get(i) != Some(v)) {
            continue;
        }
        let parse = |i: usize| -> Result<f64> {
            let s = rec.get(i).unwrap_or("");
            s.parse()
                .map_err(|_| Error::Input(format!("{}: cannot parse {s:?} as a number", path.display())))
        };
        let name: Vec<&str> = gi.iter().map(|&i| rec.get(i).unwrap_or("")).collect();
        let name = if name.is_empty() {
            y_col.to_string()
        } else {
            name.join("/")
        };
        groups.entry(name).or_default().push((parse(xi)?, parse(yi)?));
    }
    if groups.is_empty() {
        return Err(Error::Usage(format!("no rows of {} matched", path.display())));
    }
    Ok(LineChart {
        title: y_col.to_string(),
        x_label: x_col.to_string(),
        y_label: y_col.to_string(),
        series: groups
            .into_iter()
            .map(|(name, mut points)| {
                points.sort_by(|a, b| a.0.total_cmp(&b.0));
                Series {
                    name,
                    points,
                    band: None,
                }
            })
            .collect(),
    })
}

/// Writes the standard figures of an experiment directory into `figures/`:
/// each training metric and the baseline across schedules (mean with min/max
/// band), and each measure family and scope across modalities per schedule.
pub fn write_experiment_figures(dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    let metrics: Vec<AggregateMetricRow> = read_csv(&dir.join("aggregate_metrics.csv"))?;
    let measures: Vec<AggregateMeasureRow> = read_csv(&dir.join("aggregate_measures.csv"))?;
    let fig_dir = dir.join("figures");
    let mut written = Vec::new();

    let mut by_metric: BTreeMap<String, BTreeMap<String, Vec<&AggregateMetricRow>>> = BTreeMap::new();
    for r in &metrics {
        by_metric
            .entry(r.metric.clone())
            .or_default()
            .entry(r.schedule.name().to_string())
            .or_default()
            .push(r);
    }
    for (metric, per_schedule) in by_metric {
        let chart = LineChart {
            title: metric.clone(),
            x_label: "epoch".into(),
            y_label: metric.clone(),
            series: per_schedule
                .into_iter()
                .map(|(name, rows)| Series {
                    name,
                    points: rows.iter().map(|r| (r.epoch as f64, r.mean)).collect(),
                    band: Some(rows.iter().map(|r| (r.epoch as f64, r.min, r.max)).collect()),
                })
                .collect(),
        };
        let path = fig_dir.join(format!("{metric}.svg"));
        chart.save(&path)?;
        written.push(path);
    }

    let mut by_family: BTreeMap<String, BTreeMap<String, Vec<&AggregateMeasureRow>>> = BTreeMap::new();
    for r in &measures {
        let (file, line) = match r.modality {
            None => (r.measure.name().to_string(), r.schedule.name().to_string()),
            Some(m) => (
                format!("{}_{}_{}", r.measure.name(), r.scope.name(), r.schedule.name()),
                m.name().to_string(),
            ),
        };
        by_family.entry(file).or_default().entry(line).or_default().push(r);
    }
    for (file, lines) in by_family {
        let chart = LineChart {
            title: file.clone(),
            x_label: "epoch".into(),
            y_label: "KL".into(),
            series: lines
                .into_iter()
                .map(|(name, rows)| Series {
                    name,
                    points: rows.iter().map(|r| (r.epoch as f64, r.mean)).collect(),
                    band: None,
                })
                .collect(),
        };
        let path = fig_dir.join(format!("{file}.svg"));
        chart.save(&path)?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ticks_are_round() {
        assert_eq!(ticks(0.0, 1.0, 5), vec![0.0, 0.2, 0.4, 0.6000000000000001, 0.8, 1.0]);
        assert_eq!(ticks(0.0, 8000.0, 6), vec![0.0, 2000.0, 4000.0, 6000.0, 8000.0]);
    }

    #[test]
    fn svg_has_one_polyline_per_series() {
        let chart = LineChart {
            title: "a < b".into(),
            x_label: "x".into(),
            y_label: "y".into(),
            series: vec![
                Series {
                    name: "one".into(),
                    points: vec![(0.0, 1.0), (1.0, 2.0)],
                    band: Some(vec![(0.0, 0.5, 1.5), (1.0, 1.5, 2.5)]),
                },
                Series {
                    name: "two".into(),
                    points: vec![(0.0, 3.0), (1.0, 2.0)],
                    band: None,
                },
            ],
        };
        let svg = chart.to_svg();
        assert!(svg.starts_with("<svg"));
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert_eq!(svg.matches("<polygon").count(), 1);
        assert!(svg.contains("a &lt; b"));
    }

    #[test]
    fn csv_grouping_and_filters() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        fs::write(
            &path,
            "epoch,schedule,measure,value\n1,a,x,1\n2,a,x,2\n1,b,x,3\n1,a,y,9\n",
        )
        .unwrap();
        let chart = chart_from_csv(
            &path,
            "epoch",
            "value",
            &["schedule".into()],
            &[("measure".into(), "x".into())],
        )
        .unwrap();
        assert_eq!(chart.series.len(), 2);
        assert_eq!(chart.series[0].points, vec![(1.0, 1.0), (2.0, 2.0)]);
        assert!(chart_from_csv(&path, "epoch", "nope", &[], &[]).is_err());
    }
}
