//! Standalone SVG view of a run: observations, one fitted trend with its
//! asymptote, the asymptotic backbone, and vertical markers at detected
//! levels.
//!
//! Only the trend curve is drawn as a `<path>`; axes, the asymptote and level
//! markers are `<line>`s, observations `<circle>`s and the backbone a
//! `<polyline>`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{domain, Result};
use crate::model::ObservationSeries;
use crate::trace::LearningTrace;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const MARGIN: f64 = 50.0;
const CURVE_SAMPLES: usize = 200;

/// What to highlight on top of the trace.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PlotMarks {
    /// Level of the trend to draw; the last level when unset.
    pub trend: Option<usize>,
    /// Labelled vertical markers, e.g. `("ω", level)`.
    pub levels: Vec<(String, usize)>,
}

struct Frame {
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        MARGIN + (WIDTH - 2.0 * MARGIN) * (x / self.x_max)
    }

    fn py(&self, y: f64) -> f64 {
        let t = ((y - self.y_min) / (self.y_max - self.y_min)).clamp(0.0, 1.0);
        HEIGHT - MARGIN - (HEIGHT - 2.0 * MARGIN) * t
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn render_svg(trace: &LearningTrace, series: &ObservationSeries, marks: &PlotMarks) -> Result<String> {
    let Some(last) = trace.last_level() else {
        return Err(domain("cannot plot an empty trace"));
    };
    let level = marks.trend.unwrap_or(last);
    let trend = trace
        .trend(level)
        .ok_or_else(|| domain(format!("no trend at level {level}")))?;
    let params = trend.params;
    let obs = series.points();
    let x_last = obs.last().map_or(trend.position, |p| p.position).max(trend.position) as f64;
    let x_max = 1.25 * x_last;
    let x_start = obs.first().map_or(trend.position, |p| p.position) as f64 * 0.5;

    let curve: Vec<(f64, f64)> = (0..=CURVE_SAMPLES)
        .map(|k| {
            let x = x_start + (x_max - x_start) * k as f64 / CURVE_SAMPLES as f64;
            (x, params.c - params.gap(x))
        })
        .collect();
    let mut ys: Vec<f64> = obs.iter().map(|p| p.accuracy).collect();
    ys.push(params.c);
    ys.push(curve[0].1);
    let lo = ys.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let pad = ((hi - lo) * 0.05).max(0.5);
    let frame = Frame {
        x_max,
        y_min: (lo - pad).max(0.0),
        y_max: hi + pad,
    };

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let (x0, y0, x1, y1) = (MARGIN, HEIGHT - MARGIN, WIDTH - MARGIN, MARGIN);
    let _ = writeln!(svg, r#"<line class="axis" x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>"#);
    let _ = writeln!(svg, r#"<line class="axis" x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{x0}" y="{:.2}" font-size="11">{:.2}</text><text x="{x0}" y="{:.2}" font-size="11">{:.2}</text><text x="{:.2}" y="{:.2}" font-size="11" text-anchor="end">{}</text>"#,
        y1 - 6.0,
        frame.y_max,
        y0 + 14.0,
        frame.y_min,
        x1,
        y0 + 14.0,
        x_max.round()
    );

    let ay = frame.py(params.c);
    let _ = writeln!(
        svg,
        r#"<line class="asymptote" x1="{x0}" y1="{ay:.2}" x2="{x1}" y2="{ay:.2}" stroke="gray" stroke-dasharray="6 4"/>"#
    );

    let backbone: Vec<String> = trace
        .trends()
        .iter()
        .filter(|t| t.converged)
        .map(|t| format!("{:.2},{:.2}", frame.px(t.position as f64), frame.py(t.asymptote())))
        .collect();
    if !backbone.is_empty() {
        let _ = writeln!(
            svg,
            r#"<polyline class="backbone" points="{}" fill="none" stroke="orange"/>"#,
            backbone.join(" ")
        );
    }

    for (label, l) in &marks.levels {
        if let Some(t) = trace.trend(*l) {
            let mx = frame.px(t.position as f64);
            let _ = writeln!(
                svg,
                r#"<line class="marker" x1="{mx:.2}" y1="{y0}" x2="{mx:.2}" y2="{y1}" stroke="green" stroke-dasharray="2 3"/><text x="{mx:.2}" y="{:.2}" font-size="11">{}</text>"#,
                y1 - 6.0,
                escape(label)
            );
        }
    }

    let mut d = String::new();
    for (i, (x, y)) in curve.iter().enumerate() {
        let _ = write!(d, "{}{:.2},{:.2}", if i == 0 { "M" } else { " L" }, frame.px(*x), frame.py(*y));
    }
    let _ = writeln!(svg, r#"<path class="trend" d="{d}" fill="none" stroke="blue"/>"#);

    for p in obs {
        let _ = writeln!(
            svg,
            r#"<circle cx="{:.2}" cy="{:.2}" r="2" fill="black"/>"#,
            frame.px(p.position as f64),
            frame.py(p.accuracy)
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

pub fn emit_plot(
    trace: &LearningTrace,
    series: &ObservationSeries,
    marks: &PlotMarks,
    path: impl AsRef<Path>,
) -> Result<()> {
    fs::write(path, render_svg(trace, series, marks)?)?;
    Ok(())
}
