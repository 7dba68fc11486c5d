//! SVG charts of a trace.

use std::path::Path;

use plotters::prelude::*;

use crate::error::IoError;
use crate::trace::{SimTrace, TraceRow};

/// A named set of trace columns drawn on one chart.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotGroup {
    /// `f1..f4` and the margin `fm`.
    Forces,
    /// Commanded twist.
    Velocity,
    /// Cumulative supplied energy and storage.
    Energy,
    /// Potential and virtual torque.
    Barrier,
}

type Series = (&'static str, fn(&TraceRow) -> f64);

impl PlotGroup {
    pub const ALL: [PlotGroup; 4] = [PlotGroup::Forces, PlotGroup::Velocity, PlotGroup::Energy, PlotGroup::Barrier];

    pub fn name(self) -> &'static str {
        match self {
            PlotGroup::Forces => "forces",
            PlotGroup::Velocity => "velocity",
            PlotGroup::Energy => "energy",
            PlotGroup::Barrier => "barrier",
        }
    }

    pub fn series(self) -> Vec<Series> {
        match self {
            PlotGroup::Forces => vec![
                ("f1", |r| r.f.f[0]),
                ("f2", |r| r.f.f[1]),
                ("f3", |r| r.f.f[2]),
                ("f4", |r| r.f.f[3]),
                ("fm", |r| r.fm),
            ],
            PlotGroup::Velocity => {
                vec![("vcmd_x", |r| r.v_cmd.vx), ("vcmd_y", |r| r.v_cmd.vy), ("vcmd_w", |r| r.v_cmd.wz)]
            }
            PlotGroup::Energy => vec![("E", |r| r.e), ("L", |r| r.l)],
            PlotGroup::Barrier => vec![("W", |r| r.w), ("tauv", |r| r.tau_v)],
        }
    }
}

fn y_range(trace: &SimTrace, series: &[Series]) -> (f64, f64) {
    let (lo, hi) = trace
        .rows
        .iter()
        .flat_map(|r| series.iter().map(move |(_, f)| f(r)))
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (-1.0, 1.0);
    }
    let pad = ((hi - lo) * 0.05).max(1e-6);
    (lo - pad, hi + pad)
}

/// Draws `group` against time into an SVG at `path`. Returns the number of
/// series drawn.
pub fn plot(trace: &SimTrace, group: PlotGroup, path: &Path) -> Result<usize, IoError> {
    if trace.is_empty() {
        return Err(IoError::EmptyTrace);
    }
    let plot_err = |e: &dyn std::fmt::Display| IoError::Plot { path: path.into(), message: e.to_string() };
    let series = group.series();
    let t0 = trace.rows[0].t;
    let t1 = trace.rows[trace.len() - 1].t.max(t0 + 1e-9);
    let (y0, y1) = y_range(trace, &series);

    let root = SVGBackend::new(path, (900, 500)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| plot_err(&e))?;
    let mut chart = ChartBuilder::on(&root)
        .caption(group.name(), ("sans-serif", 20))
        .margin(10)
        .x_label_area_size(35)
        .y_label_area_size(60)
        .build_cartesian_2d(t0..t1, y0..y1)
        .map_err(|e| plot_err(&e))?;
    chart.configure_mesh().x_desc("t [s]").draw().map_err(|e| plot_err(&e))?;
    for (k, (name, f)) in series.iter().enumerate() {
        let color = Palette99::pick(k).to_rgba();
        chart
            .draw_series(LineSeries::new(trace.rows.iter().map(|r| (r.t, f(r))), color.stroke_width(2)))
            .map_err(|e| plot_err(&e))?
            .label(*name)
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color));
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(|e| plot_err(&e))?;
    root.present().map_err(|e| plot_err(&e))?;
    Ok(series.len())
}
