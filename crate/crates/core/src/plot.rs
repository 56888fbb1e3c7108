//! SVG figures. The CSV files written next to them hold the same numbers.

use std::path::Path;

use plotters::prelude::*;

use crate::dataset::DeltaRow;
use crate::search::{ConvergenceLog, TopkSummary};

type PlotResult = Result<(), String>;

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn padded(lo: f64, hi: f64) -> (f64, f64) {
    if !(lo.is_finite() && hi.is_finite()) {
        return (0.0, 1.0);
    }
    let pad = ((hi - lo) * 0.08).max(1e-6);
    (lo - pad, hi + pad)
}

/// Mean delta per strategy as a marker, with a bar spanning one standard
/// deviation either side.
pub fn plot_deltas(rows: &[DeltaRow], path: &Path) -> PlotResult {
    let lo = rows.iter().map(|r| r.mean_delta - r.std_delta).fold(f64::INFINITY, f64::min);
    let hi = rows.iter().map(|r| r.mean_delta + r.std_delta).fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = padded(lo.min(0.0), hi);
    let root = SVGBackend::new(path, (640, 420)).into_drawing_area();
    root.fill(&WHITE).map_err(err)?;
    let n = rows.len() as f64;
    let mut chart = ChartBuilder::on(&root)
        .caption("Preference pair deltas", ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(36)
        .y_label_area_size(52)
        .build_cartesian_2d(-0.5..n - 0.5, lo..hi)
        .map_err(err)?;
    let labels: Vec<String> = rows.iter().map(|r| r.strategy.clone()).collect();
    chart
        .configure_mesh()
        .x_labels(rows.len().max(1))
        .x_label_formatter(&|x| {
            let i = x.round();
            if (x - i).abs() < 1e-6 && i >= 0.0 {
                labels.get(i as usize).cloned().unwrap_or_default()
            } else {
                String::new()
            }
        })
        .y_desc("delta (gap %)")
        .draw()
        .map_err(err)?;
    for (i, r) in rows.iter().enumerate() {
        let x = i as f64;
        chart
            .draw_series(std::iter::once(PathElement::new(
                vec![(x, r.mean_delta - r.std_delta), (x, r.mean_delta + r.std_delta)],
                BLUE.stroke_width(2),
            )))
            .map_err(err)?;
        chart
            .draw_series(std::iter::once(Circle::new((x, r.mean_delta), 5, BLUE.filled())))
            .map_err(err)?;
    }
    root.present().map_err(err)
}

/// Best-so-far gap against evaluation count, one line per run.
pub fn plot_convergence(runs: &[(String, &ConvergenceLog)], path: &Path) -> PlotResult {
    let points: Vec<Vec<(f64, f64)>> = runs
        .iter()
        .map(|(_, log)| {
            log.rows
                .iter()
                .filter_map(|r| r.best_1.map(|b| (r.eval_index as f64, b)))
                .collect()
        })
        .collect();
    let all = points.iter().flatten();
    let x_max = all.clone().map(|p| p.0).fold(1.0, f64::max);
    let y_lo = all.clone().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let y_hi = all.map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let (y_lo, y_hi) = padded(y_lo, y_hi);
    let root = SVGBackend::new(path, (720, 440)).into_drawing_area();
    root.fill(&WHITE).map_err(err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption("Convergence", ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(36)
        .y_label_area_size(52)
        .build_cartesian_2d(0.0..x_max, y_lo..y_hi)
        .map_err(err)?;
    chart
        .configure_mesh()
        .x_desc("evaluations")
        .y_desc("best gap (%)")
        .draw()
        .map_err(err)?;
    for (i, ((label, _), pts)) in runs.iter().zip(points).enumerate() {
        let color = Palette99::pick(i).to_rgba();
        chart
            .draw_series(LineSeries::new(pts, color.stroke_width(2)))
            .map_err(err)?
            .label(label.clone())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], color.stroke_width(2)));
    }
    if !runs.is_empty() {
        chart
            .configure_series_labels()
            .background_style(WHITE.mix(0.8))
            .border_style(BLACK)
            .draw()
            .map_err(err)?;
    }
    root.present().map_err(err)
}

/// The top-k gaps of each pool as a column of points with its mean marked.
pub fn plot_topk(pools: &[(String, TopkSummary)], path: &Path) -> PlotResult {
    let all = pools.iter().flat_map(|(_, s)| s.gaps.iter().copied());
    let lo = all.clone().fold(f64::INFINITY, f64::min);
    let hi = all.fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = padded(lo, hi);
    let root = SVGBackend::new(path, (640, 420)).into_drawing_area();
    root.fill(&WHITE).map_err(err)?;
    let n = pools.len() as f64;
    let mut chart = ChartBuilder::on(&root)
        .caption("Top-k gap distribution", ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(36)
        .y_label_area_size(52)
        .build_cartesian_2d(-0.5..n - 0.5, lo..hi)
        .map_err(err)?;
    let labels: Vec<String> = pools.iter().map(|p| p.0.clone()).collect();
    chart
        .configure_mesh()
        .x_labels(pools.len().max(1))
        .x_label_formatter(&|x| {
            let i = x.round();
            if (x - i).abs() < 1e-6 && i >= 0.0 {
                labels.get(i as usize).cloned().unwrap_or_default()
            } else {
                String::new()
            }
        })
        .y_desc("average gap (%)")
        .draw()
        .map_err(err)?;
    for (i, (_, s)) in pools.iter().enumerate() {
        let x = i as f64;
        let k = s.gaps.len().max(2) as f64;
        chart
            .draw_series(s.gaps.iter().enumerate().map(|(j, &g)| {
                // spread points sideways so equal gaps stay visible
                let dx = 0.3 * (j as f64 / (k - 1.0) - 0.5);
                Circle::new((x + dx, g), 3, BLUE.mix(0.6).filled())
            }))
            .map_err(err)?;
        chart
            .draw_series(std::iter::once(PathElement::new(
                vec![(x - 0.25, s.mean), (x + 0.25, s.mean)],
                RED.stroke_width(2),
            )))
            .map_err(err)?;
    }
    root.present().map_err(err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::search::ConvergenceRow;

    #[test]
    fn figures_are_written() {
        let dir = tempfile::tempdir().unwrap();
        let rows = vec![
            DeltaRow { strategy: "dar".into(), mean_delta: 30.0, std_delta: 10.0 },
            DeltaRow { strategy: "top1".into(), mean_delta: 50.0, std_delta: 20.0 },
        ];
        plot_deltas(&rows, &dir.path().join("d.svg")).unwrap();
        let log = ConvergenceLog {
            rows: (1..5)
                .map(|i| ConvergenceRow {
                    eval_index: i,
                    best_1: Some(10.0 / i as f64),
                    best_5_mean: None,
                    best_10_mean: None,
                })
                .collect(),
        };
        plot_convergence(&[("a".into(), &log)], &dir.path().join("c.svg")).unwrap();
        let s = TopkSummary { gaps: vec![1.0, 2.0, 3.0], mean: 2.0, std: 0.8 };
        plot_topk(&[("x".into(), s)], &dir.path().join("t.svg")).unwrap();
        let svg = std::fs::read_to_string(dir.path().join("d.svg")).unwrap();
        assert!(svg.contains("<svg") && svg.contains("dar"));
    }
}
