//! SVG figures. Plots are derived from result files and never feed back into them.

use std::path::Path;

use plotters::prelude::*;

use super::experiment::{SweepResult, ThroughputResult};
use crate::error::{Error, Result};
use crate::ppo::IterationMetrics;

const SIZE: (u32, u32) = (800, 500);
const PALETTE: [RGBColor; 6] = [
    RGBColor(31, 119, 180),
    RGBColor(214, 39, 40),
    RGBColor(44, 160, 44),
    RGBColor(255, 127, 14),
    RGBColor(148, 103, 189),
    RGBColor(140, 86, 75),
];

fn plot_err<E: std::fmt::Display>(e: E) -> Error {
    Error::Plot(e.to_string())
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

/// Satisfaction versus load, one line per method with a ±1 std band.
pub fn plot_sweep(result: &SweepResult, path: impl AsRef<Path>) -> Result<()> {
    let root = SVGBackend::new(path.as_ref(), SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let (x0, x1) = bounds(result.curves.iter().flat_map(|c| c.points.iter().map(|p| p.load)));
    let mut chart = ChartBuilder::on(&root)
        .caption("QoS satisfaction rate vs traffic load", ("sans-serif", 22))
        .margin(15)
        .x_label_area_size(40)
        .y_label_area_size(55)
        .build_cartesian_2d(x0..x1, 0.0..1.05)
        .map_err(plot_err)?;
    chart
        .configure_mesh()
        .x_desc("normalised traffic load")
        .y_desc("satisfaction rate")
        .draw()
        .map_err(plot_err)?;
    for (i, curve) in result.curves.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let band: Vec<(f64, f64)> = curve
            .points
            .iter()
            .map(|p| (p.load, (p.satisfaction.mean + p.satisfaction.std).min(1.05)))
            .chain(
                curve
                    .points
                    .iter()
                    .rev()
                    .map(|p| (p.load, (p.satisfaction.mean - p.satisfaction.std).max(0.0))),
            )
            .collect();
        chart
            .draw_series(std::iter::once(Polygon::new(band, color.mix(0.15))))
            .map_err(plot_err)?;
        chart
            .draw_series(LineSeries::new(
                curve.points.iter().map(|p| (p.load, p.satisfaction.mean)),
                color.stroke_width(2),
            ))
            .map_err(plot_err)?
            .label(curve.method.name())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color.stroke_width(2)));
        chart
            .draw_series(
                curve
                    .points
                    .iter()
                    .map(|p| Circle::new((p.load, p.satisfaction.mean), 3, color.filled())),
            )
            .map_err(plot_err)?;
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(plot_err)?;
    root.present().map_err(plot_err)
}

/// Per-step throughput of every method with the high-load window shaded.
pub fn plot_throughput(result: &ThroughputResult, path: impl AsRef<Path>) -> Result<()> {
    let root = SVGBackend::new(path.as_ref(), SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let steps = result
        .series
        .iter()
        .map(|s| s.throughput.len())
        .max()
        .unwrap_or(1)
        .max(1);
    let (_, y1) = bounds(result.series.iter().flat_map(|s| s.throughput.iter().map(|v| v / 1e6)));
    let y1 = y1.max(1e-3);
    let mut chart = ChartBuilder::on(&root)
        .caption("Network throughput over time", ("sans-serif", 22))
        .margin(15)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d(0f64..steps as f64, 0f64..y1)
        .map_err(plot_err)?;
    chart
        .configure_mesh()
        .x_desc("control step")
        .y_desc("throughput (Mbit/s)")
        .draw()
        .map_err(plot_err)?;
    let (a, b) = result.high_load_window;
    if b > a {
        chart
            .draw_series(std::iter::once(Rectangle::new(
                [(a as f64, 0.0), (b as f64, y1)],
                RGBColor(128, 128, 128).mix(0.15).filled(),
            )))
            .map_err(plot_err)?
            .label("high-load window")
            .legend(|(x, y)| Rectangle::new([(x, y - 5), (x + 20, y + 5)], RGBColor(128, 128, 128).mix(0.3).filled()));
    }
    for (i, s) in result.series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        chart
            .draw_series(LineSeries::new(
                s.throughput.iter().enumerate().map(|(t, v)| (t as f64, v / 1e6)),
                color.stroke_width(2),
            ))
            .map_err(plot_err)?
            .label(s.method.name())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color.stroke_width(2)));
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(plot_err)?;
    root.present().map_err(plot_err)
}

/// Training curves: satisfaction and per-constraint mean cost against iteration.
pub fn plot_training(log: &[IterationMetrics], path: impl AsRef<Path>) -> Result<()> {
    let root = SVGBackend::new(path.as_ref(), SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let n = log.len().max(2) as f64;
    let mut chart = ChartBuilder::on(&root)
        .caption("Training progress", ("sans-serif", 22))
        .margin(15)
        .x_label_area_size(40)
        .y_label_area_size(55)
        .build_cartesian_2d(0f64..n, 0f64..1.05)
        .map_err(plot_err)?;
    chart.configure_mesh().x_desc("iteration").draw().map_err(plot_err)?;
    let lines: [(&str, Box<dyn Fn(&IterationMetrics) -> f64>); 3] = [
        ("satisfaction", Box::new(|m| m.satisfaction)),
        ("delay-violation cost", Box::new(|m| m.mean_costs[0])),
        ("reliability-violation cost", Box::new(|m| m.mean_costs[1])),
    ];
    for (i, (label, f)) in lines.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        chart
            .draw_series(LineSeries::new(
                log.iter().map(|m| (m.iteration as f64, f(m).clamp(0.0, 1.05))),
                color.stroke_width(2),
            ))
            .map_err(plot_err)?
            .label(*label)
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color.stroke_width(2)));
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(plot_err)?;
    root.present().map_err(plot_err)
}
