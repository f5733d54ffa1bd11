//! Self-contained SVG charts of compartment counts over time: fixed 800x500
//! viewport, linear axes, y auto-scaled to the maximum count. One polyline
//! (line style) or point set (scatter style) per selected compartment per
//! run or aggregate. Output is byte-deterministic for fixed inputs.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

use crate::dsl::Compartment;
use crate::report::TimeSeriesTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotStyle {
    Line,
    Scatter,
}

#[derive(Debug, Error)]
pub enum PlotError {
    #[error("no series selected to plot")]
    EmptySeries,
    #[error("failed to write plot: {0}")]
    Io(#[from] io::Error),
}

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const MARGIN_LEFT: f64 = 62.0;
const MARGIN_RIGHT: f64 = 16.0;
const MARGIN_TOP: f64 = 18.0;
const MARGIN_BOTTOM: f64 = 46.0;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#7f7f7f",
];

fn compartment_color(c: Compartment) -> &'static str {
    match c {
        Compartment::Susceptible => PALETTE[0],
        Compartment::Infected => PALETTE[1],
        Compartment::Recovered => PALETTE[2],
        Compartment::Resistant => PALETTE[3],
    }
}

/// Tick step from {1,2,5} x 10^k leaving at most `max_ticks` intervals.
fn nice_step(span: f64, max_ticks: usize) -> f64 {
    let mut magnitude = 1.0;
    loop {
        for mult in [1.0, 2.0, 5.0] {
            let step = mult * magnitude;
            if span / step <= max_ticks as f64 {
                return step;
            }
        }
        magnitude *= 10.0;
    }
}

struct Frame {
    horizon: u32,
    y_max: f64,
}

impl Frame {
    fn x(&self, t: u32) -> f64 {
        let span = (self.horizon - 1).max(1) as f64;
        MARGIN_LEFT + (t as f64 - 1.0) / span * (WIDTH - MARGIN_LEFT - MARGIN_RIGHT)
    }

    fn y(&self, value: f64) -> f64 {
        MARGIN_TOP + (1.0 - value / self.y_max) * (HEIGHT - MARGIN_TOP - MARGIN_BOTTOM)
    }
}

/// Render the selected compartment series of a table to SVG text.
pub fn render_svg(
    table: &TimeSeriesTable,
    style: PlotStyle,
    series: &BTreeSet<Compartment>,
) -> Result<String, PlotError> {
    if series.is_empty() || table.rows.is_empty() {
        return Err(PlotError::EmptySeries);
    }

    // (label, color, points) per run per compartment.
    let runs = table.run_indices();
    let color_by_run = runs.len() > 1 && series.len() == 1;
    type Trace<'a> = (String, &'a str, Vec<(u32, f64)>);
    let mut traces: Vec<Trace> = Vec::new();
    for (run_pos, run) in runs.iter().enumerate() {
        for (c_pos, &c) in series.iter().enumerate() {
            let values: Vec<f64> = match run {
                Some(k) => table.run_series(*k, c),
                None => table.series(c),
            };
            let points: Vec<(u32, f64)> = values
                .iter()
                .enumerate()
                .map(|(i, &v)| (i as u32 + 1, v))
                .collect();
            let color = if color_by_run {
                PALETTE[run_pos % PALETTE.len()]
            } else {
                let _ = c_pos;
                compartment_color(c)
            };
            let label = match run {
                Some(k) => format!("run {k}: {c}"),
                None => c.to_string(),
            };
            traces.push((label, color, points));
        }
    }

    let y_data_max = traces
        .iter()
        .flat_map(|(_, _, pts)| pts.iter().map(|&(_, v)| v))
        .fold(0.0f64, f64::max);
    let frame = Frame {
        horizon: table.horizon,
        y_max: y_data_max.ceil().max(1.0),
    };

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(
        svg,
        r##"<rect width="{WIDTH}" height="{HEIGHT}" fill="#ffffff"/>"##
    );

    // Gridlines and ticks.
    let x_step = nice_step(frame.horizon.saturating_sub(1).max(1) as f64, 8) as u32;
    let y_step = nice_step(frame.y_max, 8);
    let _ = writeln!(svg, r##"<g stroke="#dddddd" stroke-width="1">"##);
    let mut t = 1;
    while t <= frame.horizon {
        let x = frame.x(t);
        let _ = writeln!(
            svg,
            r#"<line x1="{x:.2}" y1="{top:.2}" x2="{x:.2}" y2="{bottom:.2}"/>"#,
            top = MARGIN_TOP,
            bottom = HEIGHT - MARGIN_BOTTOM
        );
        t += x_step;
    }
    let mut v = 0.0;
    while v <= frame.y_max + 1e-9 {
        let y = frame.y(v);
        let _ = writeln!(
            svg,
            r#"<line x1="{left:.2}" y1="{y:.2}" x2="{right:.2}" y2="{y:.2}"/>"#,
            left = MARGIN_LEFT,
            right = WIDTH - MARGIN_RIGHT
        );
        v += y_step;
    }
    let _ = writeln!(svg, "</g>");

    // Axes.
    let _ = writeln!(
        svg,
        r##"<g stroke="#000000" stroke-width="1"><line x1="{l:.2}" y1="{b:.2}" x2="{r:.2}" y2="{b:.2}"/><line x1="{l:.2}" y1="{t:.2}" x2="{l:.2}" y2="{b:.2}"/></g>"##,
        l = MARGIN_LEFT,
        r = WIDTH - MARGIN_RIGHT,
        t = MARGIN_TOP,
        b = HEIGHT - MARGIN_BOTTOM
    );

    // Tick labels.
    let _ = writeln!(
        svg,
        r##"<g font-family="sans-serif" font-size="11" fill="#000000">"##
    );
    let mut t = 1;
    while t <= frame.horizon {
        let _ = writeln!(
            svg,
            r#"<text x="{x:.2}" y="{y:.2}" text-anchor="middle">{t}</text>"#,
            x = frame.x(t),
            y = HEIGHT - MARGIN_BOTTOM + 16.0
        );
        t += x_step;
    }
    let mut v = 0.0;
    while v <= frame.y_max + 1e-9 {
        let _ = writeln!(
            svg,
            r#"<text x="{x:.2}" y="{y:.2}" text-anchor="end">{v}</text>"#,
            x = MARGIN_LEFT - 6.0,
            y = frame.y(v) + 4.0
        );
        v += y_step;
    }
    let _ = writeln!(svg, "</g>");

    // Axis titles.
    let y_title = if series.len() == 1 {
        format!("{} (individuals)", series.iter().next().unwrap())
    } else {
        "individuals".to_string()
    };
    let _ = writeln!(
        svg,
        r#"<text x="{x:.2}" y="{y:.2}" font-family="sans-serif" font-size="13" text-anchor="middle">time (weeks)</text>"#,
        x = MARGIN_LEFT + (WIDTH - MARGIN_LEFT - MARGIN_RIGHT) / 2.0,
        y = HEIGHT - 10.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{y:.2}" font-family="sans-serif" font-size="13" text-anchor="middle" transform="rotate(-90 16 {y:.2})">{y_title}</text>"#,
        y = MARGIN_TOP + (HEIGHT - MARGIN_TOP - MARGIN_BOTTOM) / 2.0
    );

    // Series.
    for (_, color, points) in &traces {
        match style {
            PlotStyle::Line => {
                let coords: Vec<String> = points
                    .iter()
                    .map(|&(t, v)| format!("{:.2},{:.2}", frame.x(t), frame.y(v)))
                    .collect();
                let _ = writeln!(
                    svg,
                    r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                    coords.join(" ")
                );
            }
            PlotStyle::Scatter => {
                let _ = writeln!(svg, r#"<g fill="{color}">"#);
                for &(t, v) in points {
                    let _ = writeln!(
                        svg,
                        r#"<circle cx="{:.2}" cy="{:.2}" r="3"/>"#,
                        frame.x(t),
                        frame.y(v)
                    );
                }
                let _ = writeln!(svg, "</g>");
            }
        }
    }

    // Legend, top-right inside the plot area.
    let _ = writeln!(
        svg,
        r#"<g font-family="sans-serif" font-size="12" text-anchor="end">"#
    );
    for (idx, (label, color, _)) in traces.iter().enumerate() {
        let _ = writeln!(
            svg,
            r#"<text x="{x:.2}" y="{y:.2}" fill="{color}">{label}</text>"#,
            x = WIDTH - MARGIN_RIGHT - 8.0,
            y = MARGIN_TOP + 16.0 + idx as f64 * 15.0
        );
    }
    let _ = writeln!(svg, "</g>");
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Render and write a plot file.
pub fn render_plot(
    table: &TimeSeriesTable,
    style: PlotStyle,
    series: &BTreeSet<Compartment>,
    out: &Path,
) -> Result<(), PlotError> {
    let svg = render_svg(table, style, series)?;
    fs::write(out, svg)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::{InitialInfected, SpecFragment};
    use crate::ground::ground;
    use crate::population::TemporalContactGraph;
    use crate::report::{aggregate, AggregateMode};

    fn inert_table(n: usize, horizon: u32, runs: u32, mode: AggregateMode) -> TimeSeriesTable {
        let mut spec =
            crate::dsl::merge_specs(&SpecFragment::default(), &SpecFragment::default()).unwrap();
        spec.initial_infected = InitialInfected::Count(0);
        spec.horizon = horizon;
        let ids: Vec<String> = (0..n).map(|i| format!("x{i}")).collect();
        let graph = TemporalContactGraph::new(ids, vec![]).unwrap();
        let model = ground(&spec, &graph).unwrap();
        let trajs = crate::engine::run_many(&model, runs, 0, false);
        aggregate(&trajs, mode).unwrap()
    }

    fn infected_only() -> BTreeSet<Compartment> {
        [Compartment::Infected].into_iter().collect()
    }

    #[test]
    fn inert_line_plot_has_one_flat_polyline() {
        let table = inert_table(3, 6, 1, AggregateMode::Single);
        let svg = render_svg(&table, PlotStyle::Line, &infected_only()).unwrap();
        let polylines: Vec<&str> = svg.lines().filter(|l| l.starts_with("<polyline")).collect();
        assert_eq!(polylines.len(), 1);
        // All points sit on the zero baseline.
        let baseline = format!("{:.2}", HEIGHT - MARGIN_BOTTOM);
        let points = polylines[0]
            .split("points=\"")
            .nth(1)
            .unwrap()
            .trim_end_matches("\"/>");
        for pair in points.split(' ') {
            let y = pair.split(',').nth(1).unwrap();
            assert_eq!(y, baseline);
        }
    }

    #[test]
    fn stacked_scatter_has_one_point_set_per_run() {
        let table = inert_table(3, 4, 5, AggregateMode::Stacked);
        let svg = render_svg(&table, PlotStyle::Scatter, &infected_only()).unwrap();
        let groups = svg.lines().filter(|l| l.starts_with("<g fill=\"#")).count();
        assert_eq!(groups, 5);
        let circles = svg.lines().filter(|l| l.starts_with("<circle")).count();
        assert_eq!(circles, 5 * 4);
    }

    #[test]
    fn empty_series_is_rejected() {
        let table = inert_table(2, 3, 1, AggregateMode::Single);
        assert!(matches!(
            render_svg(&table, PlotStyle::Line, &BTreeSet::new()),
            Err(PlotError::EmptySeries)
        ));
    }

    #[test]
    fn rendering_is_byte_deterministic() {
        let table = inert_table(4, 8, 3, AggregateMode::Stacked);
        let series: BTreeSet<Compartment> = Compartment::ALL.into_iter().collect();
        let a = render_svg(&table, PlotStyle::Line, &series).unwrap();
        let b = render_svg(&table, PlotStyle::Line, &series).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn axis_labels_follow_selection() {
        let table = inert_table(2, 3, 1, AggregateMode::Single);
        let svg = render_svg(&table, PlotStyle::Line, &infected_only()).unwrap();
        assert!(svg.contains("time (weeks)"));
        assert!(svg.contains("infected (individuals)"));
        let all: BTreeSet<Compartment> = Compartment::ALL.into_iter().collect();
        let svg = render_svg(&table, PlotStyle::Line, &all).unwrap();
        assert!(svg.contains(">individuals</text>"));
    }
}
