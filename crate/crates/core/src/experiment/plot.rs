//! SVG figures from run directories: overlaid learning curves, per-agent
//! congestion bars and sweep response curves.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use plotters::prelude::*;

use crate::error::{Error, Result};
use crate::experiment::run::{final_window, read_metrics, read_sweep, METRICS_FILE, SWEEP_FILE};

const SIZE: (u32, u32) = (900, 540);

/// Per-episode curve and end-of-training congestion for one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunCurves {
    pub label: String,
    /// Mean per-step group utility per episode, in episode order.
    pub group_utility: Vec<f64>,
    /// Mean congestion per agent over the final 10% of episodes.
    pub congestion: Vec<f64>,
}

pub fn load_curves(dir: &Path, label: &str) -> Result<RunCurves> {
    let path = dir.join(METRICS_FILE);
    if !path.is_file() {
        return Err(Error::Metrics(format!("{} is missing", path.display())));
    }
    let rows = read_metrics(&path)?;
    if rows.is_empty() {
        return Err(Error::Metrics(format!("{} has no rows", path.display())));
    }
    let mut per_episode: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
    for r in &rows {
        let e = per_episode.entry(r.episode).or_default();
        e.0 += r.group_utility;
        e.1 += 1;
    }
    let episodes: Vec<usize> = per_episode.keys().copied().collect();
    let group_utility = per_episode.values().map(|(s, n)| s / *n as f64).collect();

    let first_tail = episodes[episodes.len() - final_window(episodes.len()).min(episodes.len())];
    let agents = rows.iter().map(|r| r.agent).max().unwrap_or(0) + 1;
    let mut sums = vec![(0.0, 0usize); agents];
    for r in rows.iter().filter(|r| r.episode >= first_tail) {
        sums[r.agent].0 -= r.reward;
        sums[r.agent].1 += 1;
    }
    Ok(RunCurves {
        label: label.to_string(),
        group_utility,
        congestion: sums.into_iter().map(|(s, n)| s / n.max(1) as f64).collect(),
    })
}

/// Trailing moving average over `window` points.
pub fn smooth(values: &[f64], window: usize) -> Vec<f64> {
    let w = window.max(1);
    (0..values.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(w);
            values[lo..=i].iter().sum::<f64>() / (i + 1 - lo) as f64
        })
        .collect()
}

fn plot_err<E: std::fmt::Display>(e: E) -> Error {
    Error::Plot(e.to_string())
}

fn file_label(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' }).collect()
}

fn padded(lo: f64, hi: f64) -> std::ops::Range<f64> {
    let span = (hi - lo).abs().max(1e-9);
    (lo - 0.05 * span)..(hi + 0.05 * span)
}

pub fn plot_learning_curves(runs: &[RunCurves], path: &Path) -> Result<()> {
    let longest = runs.iter().map(|r| r.group_utility.len()).max().unwrap_or(1);
    let smoothed: Vec<Vec<f64>> = runs
        .iter()
        .map(|r| smooth(&r.group_utility, (r.group_utility.len() / 10).max(1)))
        .collect();
    let (lo, hi) = smoothed
        .iter()
        .flatten()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));

    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption("Group utility per step (smoothed)", ("sans-serif", 22))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(70)
        .build_cartesian_2d(0f64..longest.max(2) as f64 - 1.0, padded(lo, hi))
        .map_err(plot_err)?;
    chart
        .configure_mesh()
        .x_desc("episode")
        .y_desc("mean group utility")
        .draw()
        .map_err(plot_err)?;
    for (i, (run, ys)) in runs.iter().zip(&smoothed).enumerate() {
        let color = Palette99::pick(i).to_rgba();
        chart
            .draw_series(LineSeries::new(
                ys.iter().enumerate().map(|(x, &y)| (x as f64, y)),
                color.stroke_width(2),
            ))
            .map_err(plot_err)?
            .label(run.label.clone())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color.stroke_width(2)));
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .position(SeriesLabelPosition::LowerRight)
        .draw()
        .map_err(plot_err)?;
    root.present().map_err(plot_err)
}

pub fn plot_congestion(run: &RunCurves, path: &Path) -> Result<()> {
    let n = run.congestion.len();
    let hi = run.congestion.iter().copied().fold(0.0, f64::max).max(1e-9);
    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(format!("Congestion per intersection: {}", run.label), ("sans-serif", 22))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(70)
        .build_cartesian_2d(0f64..n as f64, 0f64..hi * 1.1)
        .map_err(plot_err)?;
    chart
        .configure_mesh()
        .disable_x_mesh()
        .x_labels(n + 1)
        .x_label_formatter(&|x| format!("{}", x.floor() as usize))
        .x_desc("intersection")
        .y_desc("mean sum of squared queues")
        .draw()
        .map_err(plot_err)?;
    chart
        .draw_series(
            run.congestion
                .iter()
                .enumerate()
                .map(|(j, &v)| Rectangle::new([(j as f64 + 0.15, 0.0), (j as f64 + 0.85, v)], BLUE.mix(0.7).filled())),
        )
        .map_err(plot_err)?;
    root.present().map_err(plot_err)
}

/// `points` are `(swept value, final group utility)`.
pub fn plot_sweep(key: &str, points: &[(f64, f64)], path: &Path) -> Result<()> {
    let (xlo, xhi) = points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.0), b.max(p.0)));
    let (ylo, yhi) = points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.1), b.max(p.1)));
    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(format!("Final group utility vs {key}"), ("sans-serif", 22))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(70)
        .build_cartesian_2d(padded(xlo, xhi), padded(ylo, yhi))
        .map_err(plot_err)?;
    chart.configure_mesh().x_desc(key).y_desc("final group utility").draw().map_err(plot_err)?;
    chart
        .draw_series(LineSeries::new(points.iter().copied(), RED.stroke_width(2)))
        .map_err(plot_err)?;
    chart
        .draw_series(points.iter().map(|&p| Circle::new(p, 4, RED.filled())))
        .map_err(plot_err)?;
    root.present().map_err(plot_err)
}

fn dir_label(dir: &Path) -> String {
    dir.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| dir.display().to_string())
}

/// Figures for every run (and every sweep) among `dirs`, written to `out`.
/// Returns the written paths.
pub fn emit_plots(dirs: &[PathBuf], out: &Path) -> Result<Vec<PathBuf>> {
    if dirs.is_empty() {
        return Err(Error::Metrics("no run directories given".into()));
    }
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut runs = Vec::new();
    let mut written = Vec::new();

    for dir in dirs {
        let sweep = dir.join(SWEEP_FILE);
        if sweep.is_file() {
            let rows = read_sweep(&sweep)?;
            if rows.is_empty() {
                return Err(Error::Metrics(format!("{} has no rows", sweep.display())));
            }
            for r in &rows {
                runs.push(load_curves(&dir.join(&r.run), &r.run)?);
            }
            let mut points: Vec<(f64, f64)> = rows
                .iter()
                .enumerate()
                .map(|(i, r)| (r.value.parse().unwrap_or(i as f64), r.final_group_utility))
                .collect();
            points.sort_by(|a, b| a.0.total_cmp(&b.0));
            let path = out.join(format!("sweep_{}_{}.svg", file_label(&dir_label(dir)), file_label(&rows[0].key)));
            plot_sweep(&rows[0].key, &points, &path)?;
            written.push(path);
            continue;
        }
        let label = dir_label(dir);
        runs.push(load_curves(dir, &label)?);
        let baselines = dir.join("baselines");
        if baselines.is_dir() {
            let mut subs: Vec<PathBuf> = std::fs::read_dir(&baselines)
                .map_err(|e| Error::io(&baselines, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.join(METRICS_FILE).is_file())
                .collect();
            subs.sort();
            for sub in subs {
                runs.push(load_curves(&sub, &format!("{label}/{}", dir_label(&sub)))?);
            }
        }
    }

    let curves = out.join("learning_curves.svg");
    plot_learning_curves(&runs, &curves)?;
    written.push(curves);
    for r in &runs {
        let path = out.join(format!("congestion_{}.svg", file_label(&r.label)));
        plot_congestion(r, &path)?;
        written.push(path);
    }
    Ok(written)
}
